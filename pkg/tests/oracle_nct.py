"""High-precision oracle for the studentized likelihood ratio.

Evaluates the noncentral t density by 50-digit quadrature of its chi-square
scale-mixture form (integrating over the chi-square variable, a different
variable and code path than the package's own integral), then assembles the
same boundary-MLE ratio convention. Run this file to regenerate the frozen
grid used by the tests.
"""

import mpmath as mp

mp.mp.dps = 50


def nct_pdf(t, df, ncp):
    """f(t; df, ncp) = integral over v of sqrt(v/df) phi(sqrt(v/df) t - ncp) chi2_df(v)."""
    t, df, ncp = mp.mpf(t), mp.mpf(df), mp.mpf(ncp)

    def integrand(v):
        c = mp.sqrt(v / df)
        z = c * t - ncp
        phi = mp.e ** (-z * z / 2) / mp.sqrt(2 * mp.pi)
        chi2 = v ** (df / 2 - 1) * mp.e ** (-v / 2) / (2 ** (df / 2) * mp.gamma(df / 2))
        return c * phi * chi2

    return mp.quad(integrand, [0, df, mp.inf])


def t_pdf(t, df):
    t, df = mp.mpf(t), mp.mpf(df)
    return (mp.gamma((df + 1) / 2) / (mp.sqrt(df * mp.pi) * mp.gamma(df / 2))
            * (1 + t * t / df) ** (-(df + 1) / 2))


def likelihood_ratio(t, df):
    if t == 0:
        return mp.mpf(1)
    num = nct_pdf(t, df, t)
    den = t_pdf(t, df)
    return num / den if t > 0 else den / num


if __name__ == "__main__":
    grid_t = [-5, -4, -3, -2, -1, 0, 1, 2, 3, 4, 5]
    print("RATIO_GRID = {")
    for df in (5, 30, 200):
        vals = ", ".join(mp.nstr(likelihood_ratio(t, df), 12) for t in grid_t)
        print(f"    {df}: [{vals}],")
    print("}")
    print()
    print("PDF_POINTS = [")
    for (t, df, ncp) in [(3, 30, 3), (1.5, 5, 1.5), (-2, 200, -2), (0.5, 30, 0.5)]:
        print(f"    ({t}, {df}, {ncp}, {mp.nstr(nct_pdf(t, df, ncp), 14)}),")
    print("]")
