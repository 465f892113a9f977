/**
 * Model server speaking the engine's line protocol over stdio.
 *
 *   -> {"op":"hello","d":3}          <- {"ok":true,"d":3}
 *   -> {"op":"predict","x":[[...]]}  <- {"y":[...]}
 *
 * One JSON document per line, UTF-8, `\n` terminated, no pretty-printing.
 * Responses are emitted in request order and flushed after every line; a
 * malformed request gets {"error":"..."} and the loop keeps serving.
 *
 * Usage: node dist/server.js <model-file>
 */

import { readFileSync } from "node:fs";
import { createInterface } from "node:readline";
import { loadModel, Model } from "./model.js";

function respond(payload: unknown): void {
  process.stdout.write(JSON.stringify(payload) + "\n");
}

function isNumericMatrix(x: unknown, d: number): x is number[][] {
  return (
    Array.isArray(x) &&
    x.every(
      (row) =>
        Array.isArray(row) &&
        row.length === d &&
        row.every((v) => typeof v === "number" && Number.isFinite(v)),
    )
  );
}

export function handleLine(model: Model, line: string): unknown {
  let message: unknown;
  try {
    message = JSON.parse(line);
  } catch {
    return { error: "invalid JSON" };
  }
  if (typeof message !== "object" || message === null || Array.isArray(message)) {
    return { error: "request must be a JSON object" };
  }
  const op = (message as Record<string, unknown>).op;
  if (op === "hello") {
    return { ok: true, d: model.d };
  }
  if (op === "predict") {
    const x = (message as Record<string, unknown>).x;
    if (!isNumericMatrix(x, model.d)) {
      return { error: `x must be a matrix with ${model.d} numeric columns` };
    }
    return { y: model.predict(x) };
  }
  return { error: `unknown op ${JSON.stringify(op)}` };
}

export function serve(model: Model): void {
  const reader = createInterface({ input: process.stdin, terminal: false });
  reader.on("line", (line) => {
    if (line.trim() === "") return;
    respond(handleLine(model, line));
  });
}

function main(): void {
  const path = process.argv[2];
  if (!path) {
    process.stderr.write("usage: node server.js <model-file>\n");
    process.exit(1);
  }
  let model: Model;
  try {
    model = loadModel(readFileSync(path, "utf8"));
  } catch (err) {
    process.stderr.write(`could not load model: ${(err as Error).message}\n`);
    process.exit(1);
  }
  serve(model!);
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("server.js") || entry.endsWith("server.ts")) {
  main();
}
