/** Log-space helpers shared by models and the session layer. */

export function logSumExp(values: Float64Array): number {
  let max = -Infinity;
  for (const v of values) if (v > max) max = v;
  if (max === -Infinity) return -Infinity;
  let sum = 0;
  for (const v of values) sum += Math.exp(v - max);
  return max + Math.log(sum);
}

/** Shift a log-weight vector so it sums to one in probability space. */
export function renormalize(values: Float64Array): Float64Array {
  const shift = logSumExp(values);
  const out = new Float64Array(values.length);
  for (let i = 0; i < values.length; i++) out[i] = values[i] - shift;
  return out;
}

/** Wire encoding: -inf travels as null since JSON has no infinities. */
export function toWire(values: Float64Array): (number | null)[] {
  return Array.from(values, (v) => (v === -Infinity ? null : v));
}

export function fromWire(values: (number | null)[]): Float64Array {
  const out = new Float64Array(values.length);
  for (let i = 0; i < values.length; i++) {
    const v = values[i];
    out[i] = v === null ? -Infinity : v;
  }
  return out;
}
