/**
 * One protocol session: hello, a stream of next-token requests, bye.
 *
 * Replies always renormalize the wrapped model's output in log space, so
 * numerical drift in a model never trips the engine's normalization guard.
 * A malformed request produces an err reply and the session continues;
 * only bye (or EOF) ends it. Apart from the request counter the session
 * is stateless: equal requests yield byte-equal reply payloads.
 */

import { logSumExp, renormalize, toWire } from './logspace.js';
import { ModelError, WrappedModel } from './models.js';

export type Mode = 'conditional' | 'marginal';

export class BridgeSession {
  private lastId = 0;

  constructor(
    private model: WrappedModel,
    private mode: Mode,
  ) {}

  helloLine(): string {
    return JSON.stringify({
      type: 'hello',
      vocab: this.model.vocab,
      bos: this.model.bos,
      eos: this.model.eos,
    });
  }

  /** Returns the reply line, or null when the engine said bye. */
  handleLine(line: string): string | null {
    let msg: unknown;
    try {
      msg = JSON.parse(line);
    } catch {
      return this.err(null, 'request is not valid JSON');
    }
    if (typeof msg !== 'object' || msg === null) {
      return this.err(null, 'request is not an object');
    }
    const req = msg as Record<string, unknown>;
    if (req.type === 'bye') return null;
    if (req.type !== 'next') return this.err(req.id, `unknown type ${String(req.type)}`);
    if (!Number.isInteger(req.id)) return this.err(null, 'missing integer id');
    const id = req.id as number;
    if (id <= this.lastId) return this.err(id, 'request ids must be strictly increasing');

    const source = this.checkIds(req.source, 'source', { allowEmpty: true });
    if (typeof source === 'string') return this.err(id, source);
    const prefix = this.checkIds(req.prefix, 'prefix', { allowEmpty: false });
    if (typeof prefix === 'string') return this.err(id, prefix);

    let logProbs: Float64Array;
    try {
      logProbs =
        this.mode === 'conditional'
          ? this.model.condLogProbs(source, prefix)
          : this.model.margLogProbs(prefix);
    } catch (e) {
      if (e instanceof ModelError) return this.err(id, e.message);
      throw e;
    }
    const normalized = renormalize(logProbs);
    if (Math.abs(logSumExp(normalized)) > 1e-6) {
      return this.err(id, 'model output could not be normalized');
    }
    this.lastId = id;
    return JSON.stringify({ type: 'dist', id, log_probs: toWire(normalized) });
  }

  /** Token-id list validation; returns the list or an error message. */
  private checkIds(
    value: unknown,
    name: string,
    opts: { allowEmpty: boolean },
  ): number[] | string {
    if (!Array.isArray(value)) return `${name} must be an array of token ids`;
    if (value.length === 0) {
      return opts.allowEmpty ? [] : `${name} must not be empty`;
    }
    const n = this.model.vocab.length;
    for (const v of value) {
      if (!Number.isInteger(v) || v < 0 || v >= n) {
        return `${name} contains out-of-vocabulary id ${String(v)}`;
      }
    }
    const ids = value as number[];
    if (ids[0] !== this.model.bos) return `${name} must begin with BOS`;
    if (ids.includes(this.model.eos)) return `${name} must be EOS-free`;
    if (ids.slice(1).includes(this.model.bos)) return `${name} repeats BOS`;
    return ids;
  }

  private err(id: unknown, msg: string): string {
    return JSON.stringify({ type: 'err', id: id ?? null, msg });
  }
}
