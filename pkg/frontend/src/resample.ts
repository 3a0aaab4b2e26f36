/** Browser-side audio conditioning: linear resampling to the pipeline rate,
 * float-to-PCM conversion, and transport chunking. Linear interpolation is
 * demo-grade on purpose; the service refuses any rate other than its own, so
 * conversion has to happen here. */

export const TARGET_RATE = 16000;
export const MAX_CHUNK_BYTES = 65536;

export function linearResample(
  input: Float32Array,
  fromRate: number,
  toRate: number,
): Float32Array {
  if (fromRate === toRate) return input.slice();
  if (input.length === 0) return new Float32Array(0);
  const outLength = Math.round((input.length * toRate) / fromRate);
  const out = new Float32Array(outLength);
  const step = fromRate / toRate;
  for (let k = 0; k < outLength; k++) {
    const position = k * step;
    const left = Math.floor(position);
    const right = Math.min(left + 1, input.length - 1);
    const frac = position - left;
    out[k] = input[left] * (1 - frac) + input[right] * frac;
  }
  return out;
}

export function floatTo16BitPcm(input: Float32Array): Int16Array {
  const out = new Int16Array(input.length);
  for (let k = 0; k < input.length; k++) {
    const clamped = Math.max(-1, Math.min(1, input[k]));
    out[k] = Math.round(clamped * 32767);
  }
  return out;
}

/** Split samples into binary frames the service accepts (<= 64 KiB each). */
export function chunkForTransport(
  samples: Int16Array,
  maxBytes: number = MAX_CHUNK_BYTES,
): ArrayBuffer[] {
  const maxSamples = Math.floor(maxBytes / 2);
  const chunks: ArrayBuffer[] = [];
  for (let start = 0; start < samples.length; start += maxSamples) {
    const view = samples.subarray(start, start + maxSamples);
    const copy = new Int16Array(view.length);
    copy.set(view);
    chunks.push(copy.buffer);
  }
  return chunks;
}

/** Root-mean-square level in decibels full scale, for the input meter. */
export function rmsDbfs(input: Float32Array): number {
  if (input.length === 0) return -Infinity;
  let acc = 0;
  for (let k = 0; k < input.length; k++) acc += input[k] * input[k];
  const rms = Math.sqrt(acc / input.length);
  return rms > 0 ? 20 * Math.log10(rms) : -Infinity;
}
