/** Wire protocol for the /stream socket: JSON control frames in both
 * directions, binary PCM frames upstream. */

export interface EventDetail {
  ks_class?: string;
  ks_scores?: number[];
  y?: number;
  sigma?: number;
  z?: number;
  best_index?: number;
  threshold?: number;
  refractory?: boolean;
  enrollment?: { filled: number; capacity: number; complete?: boolean };
}

export interface EventMessage {
  kind: "event";
  x: 0 | 1 | 2;
  t: number;
  detail: EventDetail;
}

export interface StatusMessage {
  kind: "status";
  mode: "enrolling" | "inferring";
  filled: number;
  capacity: number;
  threshold: number;
  windows_processed: number;
  gate_opens: number;
  dvector_invocations: number;
  memory: { components: Record<string, number>; total: number; limit: number } | null;
}

export interface ErrorMessage {
  kind: "error";
  message: string;
}

export type ServerMessage = EventMessage | StatusMessage | ErrorMessage;

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as Record<string, unknown>;
  switch (msg.kind) {
    case "event":
      if (typeof msg.t !== "number" || ![0, 1, 2].includes(msg.x as number)) return null;
      return msg as unknown as EventMessage;
    case "status":
      if (msg.mode !== "enrolling" && msg.mode !== "inferring") return null;
      return msg as unknown as StatusMessage;
    case "error":
      if (typeof msg.message !== "string") return null;
      return msg as unknown as ErrorMessage;
    default:
      return null;
  }
}

export const openFrame = (sampleRate: number) =>
  JSON.stringify({ kind: "open", sample_rate: sampleRate });

export const setThresholdFrame = (value: number) =>
  JSON.stringify({ kind: "set_threshold", value });

export const resetEnrollmentFrame = () => JSON.stringify({ kind: "reset_enrollment" });

export const getStatusFrame = () => JSON.stringify({ kind: "get_status" });
