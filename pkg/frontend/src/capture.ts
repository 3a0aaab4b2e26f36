/** Microphone capture: an AudioWorklet posts raw Float32 blocks to the main
 * thread, which resamples to the pipeline rate and hands over PCM chunks.
 * No buffering beyond one block — the latency story mirrors the always-on
 * device this demo imitates. */

import { chunkForTransport, floatTo16BitPcm, linearResample, rmsDbfs, TARGET_RATE } from "./resample.js";

const WORKLET_SOURCE = `
class CaptureRelay extends AudioWorkletProcessor {
  process(inputs) {
    const channel = inputs[0] && inputs[0][0];
    if (channel) {
      const copy = channel.slice();
      this.port.postMessage(copy, [copy.buffer]);
    }
    return true;
  }
}
registerProcessor("capture-relay", CaptureRelay);
`;

export interface CaptureHandle {
  stop(): void;
}

export async function startCapture(
  onChunk: (chunk: ArrayBuffer) => void,
  onLevel: (dbfs: number) => void,
): Promise<CaptureHandle> {
  const media = await navigator.mediaDevices.getUserMedia({
    audio: { channelCount: 1, echoCancellation: true, noiseSuppression: false },
  });
  const context = new AudioContext();
  const workletUrl = URL.createObjectURL(
    new Blob([WORKLET_SOURCE], { type: "application/javascript" }),
  );
  await context.audioWorklet.addModule(workletUrl);
  URL.revokeObjectURL(workletUrl);

  const source = context.createMediaStreamSource(media);
  const relay = new AudioWorkletNode(context, "capture-relay");
  source.connect(relay);

  relay.port.onmessage = (event: MessageEvent<Float32Array>) => {
    const block = event.data;
    onLevel(rmsDbfs(block));
    const resampled = linearResample(block, context.sampleRate, TARGET_RATE);
    for (const chunk of chunkForTransport(floatTo16BitPcm(resampled))) {
      onChunk(chunk);
    }
  };

  return {
    stop() {
      relay.port.onmessage = null;
      source.disconnect();
      relay.disconnect();
      media.getTracks().forEach((track) => track.stop());
      void context.close();
    },
  };
}
