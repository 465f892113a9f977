"""Regenerate the bundled synthetic fixtures (deterministic; commit outputs)."""

from pathlib import Path

import numpy as np

HERE = Path(__file__).parent


def write_csv(path, values, names):
    lines = [",".join(names)]
    for row in values:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def main():
    gen = np.random.default_rng(20240601)

    # d=8 background for retrospective verification experiments
    x8 = gen.normal(size=(64, 8))
    write_csv(HERE / "synth8.csv", x8, [f"x{j}" for j in range(8)])
    w8 = [4.0, -3.9, 3.0, -2.2, 1.6, -1.1, 0.7, -0.4]
    (HERE / "linear8.txt").write_text(
        "linear\n" + " ".join(str(w) for w in w8) + " 0.0\n")

    # d=12 background for the adaptive top-K experiments
    x12 = gen.normal(size=(64, 12))
    write_csv(HERE / "synth12.csv", x12, [f"x{j}" for j in range(12)])
    w12 = [5.0, -3.6, 2.6, -1.9, 1.35, -0.95, 0.7, -0.5, 0.35, -0.25, 0.18, -0.12]
    (HERE / "linear12.txt").write_text(
        "linear\n" + " ".join(str(w) for w in w12) + " 0.0\n")

    # d=6 background and planted coefficients for selection experiments
    x6 = gen.normal(size=(80, 6))
    write_csv(HERE / "synth6.csv", x6, [f"x{j}" for j in range(6)])
    (HERE / "linear6.txt").write_text("linear\n10.0 5.0 2.5 1.0 0.5 0.25 0.0\n")

    # small two-feature network fixture
    (HERE / "mlp2.txt").write_text(
        "mlp\n2 2 1\n"
        "1.0 -2.0\n0.5 1.5\n0.25 -0.5\n"
        "2.0\n-1.0\n0.1\n")
    x2 = gen.normal(size=(32, 2))
    write_csv(HERE / "synth2.csv", x2, ["x0", "x1"])


if __name__ == "__main__":
    main()
