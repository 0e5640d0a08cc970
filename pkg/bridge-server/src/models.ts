/**
 * Model loaders for the files the engine writes: table worlds (prefix- or
 * step-keyed) and add-k backoff n-gram models. Every model answers both
 * conditional and marginal queries; table worlds marginalize over their
 * source set with the stored prior, n-grams simply ignore the source.
 */

import { readFileSync } from 'node:fs';
import { fromWire, renormalize } from './logspace.js';

export class ModelError extends Error {}

export interface WrappedModel {
  vocab: string[];
  bos: number;
  eos: number;
  condLogProbs(source: number[], prefix: number[]): Float64Array;
  margLogProbs(prefix: number[]): Float64Array;
}

interface WorldFile {
  format: string;
  version: number;
  kind: 'prefix' | 'step';
  vocab: { tokens: string[]; bos: number; eos: number };
  sources: number[][];
  prior: number[];
  rows: unknown;
}

function mixture(prior: number[], rows: Float64Array[]): Float64Array {
  const n = rows[0].length;
  const mix = new Float64Array(n);
  for (let s = 0; s < rows.length; s++) {
    const w = prior[s];
    const row = rows[s];
    for (let i = 0; i < n; i++) mix[i] += w * Math.exp(row[i]);
  }
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) out[i] = Math.log(mix[i]);
  return renormalize(out);
}

class PrefixTableWorld implements WrappedModel {
  vocab: string[];
  bos: number;
  eos: number;
  private sourceIndex = new Map<string, number>();
  private rows: Map<string, Float64Array>[] = [];
  private prior: number[];

  constructor(file: WorldFile) {
    this.vocab = file.vocab.tokens;
    this.bos = file.vocab.bos;
    this.eos = file.vocab.eos;
    this.prior = file.prior;
    file.sources.forEach((ids, i) => this.sourceIndex.set(ids.join(' '), i));
    for (const table of file.rows as Record<string, (number | null)[]>[]) {
      const parsed = new Map<string, Float64Array>();
      for (const [key, lps] of Object.entries(table)) {
        parsed.set(key, renormalize(fromWire(lps)));
      }
      this.rows.push(parsed);
    }
  }

  private row(sourceIdx: number, prefix: number[]): Float64Array {
    const row = this.rows[sourceIdx].get(prefix.join(' '));
    if (row === undefined) throw new ModelError(`prefix [${prefix}] not covered`);
    return row;
  }

  condLogProbs(source: number[], prefix: number[]): Float64Array {
    const idx = this.sourceIndex.get(source.join(' '));
    if (idx === undefined) throw new ModelError(`source [${source}] not in world`);
    return this.row(idx, prefix);
  }

  margLogProbs(prefix: number[]): Float64Array {
    const rows = this.prior.map((_, s) => this.row(s, prefix));
    return mixture(this.prior, rows);
  }
}

class StepTableWorld implements WrappedModel {
  vocab: string[];
  bos: number;
  eos: number;
  private sourceIndex = new Map<string, number>();
  private rows: Float64Array[][] = [];
  private marginals: Float64Array[] = [];

  constructor(file: WorldFile) {
    this.vocab = file.vocab.tokens;
    this.bos = file.vocab.bos;
    this.eos = file.vocab.eos;
    file.sources.forEach((ids, i) => this.sourceIndex.set(ids.join(' '), i));
    for (const rows of file.rows as (number | null)[][][]) {
      this.rows.push(rows.map((lps) => renormalize(fromWire(lps))));
    }
    const depth = this.rows[0].length;
    for (let t = 0; t < depth; t++) {
      this.marginals.push(mixture(file.prior, this.rows.map((r) => r[t])));
    }
  }

  private step(prefix: number[]): number {
    const t = prefix.length - 1;
    if (t < 0 || t >= this.rows[0].length) {
      throw new ModelError(`prefix length ${prefix.length} outside world depth`);
    }
    return t;
  }

  condLogProbs(source: number[], prefix: number[]): Float64Array {
    const idx = this.sourceIndex.get(source.join(' '));
    if (idx === undefined) throw new ModelError(`source [${source}] not in world`);
    return this.rows[idx][this.step(prefix)];
  }

  margLogProbs(prefix: number[]): Float64Array {
    return this.marginals[this.step(prefix)];
  }
}

interface NgramFile {
  format: string;
  version: number;
  order: number;
  k: number;
  vocab: { tokens: string[]; bos: number; eos: number };
  counts: Record<string, Record<string, number>>[];
}

class NgramModel implements WrappedModel {
  vocab: string[];
  bos: number;
  eos: number;
  private order: number;
  private k: number;
  private counts: Map<string, Map<number, number>>[] = [];

  constructor(file: NgramFile) {
    this.vocab = file.vocab.tokens;
    this.bos = file.vocab.bos;
    this.eos = file.vocab.eos;
    this.order = file.order;
    this.k = file.k;
    for (const table of file.counts) {
      const level = new Map<string, Map<number, number>>();
      for (const [ctx, row] of Object.entries(table)) {
        const parsed = new Map<number, number>();
        for (const [tok, c] of Object.entries(row)) parsed.set(Number(tok), c);
        level.set(ctx, parsed);
      }
      this.counts.push(level);
    }
  }

  private levelDist(level: number, context: number[]): Float64Array {
    const row = this.counts[level].get(context.join(' '));
    if (row === undefined && level > 0) return this.levelDist(level - 1, context.slice(1));
    const n = this.vocab.length;
    const probs = new Float64Array(n).fill(this.k);
    let total = this.k * n;
    if (row !== undefined) {
      for (const [tok, c] of row) {
        probs[tok] += c;
        total += c;
      }
    }
    const out = new Float64Array(n);
    for (let i = 0; i < n; i++) out[i] = Math.log(probs[i] / total);
    return out;
  }

  margLogProbs(prefix: number[]): Float64Array {
    const ctxLen = this.order - 1;
    const padded = new Array(ctxLen).fill(this.bos).concat(prefix);
    const context = ctxLen > 0 ? padded.slice(padded.length - ctxLen) : [];
    return this.levelDist(this.counts.length - 1, context);
  }

  condLogProbs(_source: number[], prefix: number[]): Float64Array {
    return this.margLogProbs(prefix);
  }
}

export function loadModel(path: string): WrappedModel {
  const payload = JSON.parse(readFileSync(path, 'utf-8'));
  if (payload.format === 'cpmidec-world' && payload.version === 1) {
    return payload.kind === 'step'
      ? new StepTableWorld(payload)
      : new PrefixTableWorld(payload);
  }
  if (payload.format === 'cpmidec-ngram' && payload.version === 1) {
    return new NgramModel(payload);
  }
  throw new ModelError(`unrecognized model file ${path}`);
}
