/**
 * Plain-text weights models served over the bridge.
 *
 * First line: `linear` or `mlp`, optionally followed by `sigmoid`.
 * linear: remaining numbers are d weights followed by the bias.
 * mlp: the next line holds the layer widths (input ... output, output 1);
 * then, per layer, an in x out weight matrix in row-major order followed by
 * its biases. Hidden activations are ReLU, matching the engine's native loader.
 */

export interface Model {
  d: number;
  predict(batch: number[][]): number[];
}

class ModelFormatError extends Error {}

function parseNumbers(lines: string[], from: number): number[] {
  const out: number[] = [];
  for (let i = from; i < lines.length; i++) {
    for (const tok of lines[i].trim().split(/\s+/)) {
      if (tok === "") continue;
      const value = Number(tok);
      if (!Number.isFinite(value)) {
        throw new ModelFormatError(`bad number ${JSON.stringify(tok)} on line ${i + 1}`);
      }
      out.push(value);
    }
  }
  return out;
}

function sigmoid(y: number): number {
  return y >= 0 ? 1 / (1 + Math.exp(-y)) : Math.exp(y) / (1 + Math.exp(y));
}

function makeLinear(weights: number[], bias: number, squash: boolean): Model {
  const d = weights.length;
  return {
    d,
    predict(batch) {
      return batch.map((row) => {
        let acc = bias;
        for (let j = 0; j < d; j++) acc += weights[j] * row[j];
        return squash ? sigmoid(acc) : acc;
      });
    },
  };
}

interface Layer {
  w: number[][]; // [in][out]
  b: number[];
}

function makeMlp(layers: Layer[], squash: boolean): Model {
  const d = layers[0].w.length;
  return {
    d,
    predict(batch) {
      return batch.map((row) => {
        let h = row;
        for (let li = 0; li < layers.length; li++) {
          const { w, b } = layers[li];
          const out = b.slice();
          for (let i = 0; i < h.length; i++) {
            const hi = h[i];
            const wi = w[i];
            for (let o = 0; o < out.length; o++) out[o] += hi * wi[o];
          }
          if (li < layers.length - 1) {
            for (let o = 0; o < out.length; o++) out[o] = Math.max(out[o], 0);
          }
          h = out;
        }
        return squash ? sigmoid(h[0]) : h[0];
      });
    },
  };
}

export function loadModel(text: string): Model {
  const lines = text.split(/\r?\n/);
  const head = (lines[0] ?? "").trim().split(/\s+/);
  const kind = (head[0] ?? "").toLowerCase();
  const squash = head.slice(1).some((tok) => tok.toLowerCase() === "sigmoid");

  if (kind === "linear") {
    const values = parseNumbers(lines, 1);
    if (values.length < 3) {
      throw new ModelFormatError("linear model needs >= 2 weights plus a bias");
    }
    return makeLinear(values.slice(0, -1), values[values.length - 1], squash);
  }

  if (kind === "mlp") {
    const dims = (lines[1] ?? "").trim().split(/\s+/).map(Number);
    if (dims.length < 2 || dims.some((v) => !Number.isInteger(v) || v < 1) || dims[dims.length - 1] !== 1) {
      throw new ModelFormatError("layer widths must be integers >= 1 ending in 1");
    }
    const values = parseNumbers(lines, 2);
    let need = 0;
    for (let i = 0; i + 1 < dims.length; i++) need += dims[i] * dims[i + 1] + dims[i + 1];
    if (values.length !== need) {
      throw new ModelFormatError(`expected ${need} mlp parameters, found ${values.length}`);
    }
    const layers: Layer[] = [];
    let pos = 0;
    for (let i = 0; i + 1 < dims.length; i++) {
      const w: number[][] = [];
      for (let r = 0; r < dims[i]; r++) {
        w.push(values.slice(pos, pos + dims[i + 1]));
        pos += dims[i + 1];
      }
      const b = values.slice(pos, pos + dims[i + 1]);
      pos += dims[i + 1];
      layers.push({ w, b });
    }
    return makeMlp(layers, squash);
  }

  throw new ModelFormatError(`unknown model kind ${JSON.stringify(kind)}`);
}
