/** Gateway wire protocol v1: message types, parsing, and command builders. */

export const PROTOCOL_VERSION = 1;

export const DWELL_MIN_S = 0;          // exclusive lower bound
export const POWER_MIN_DBM = -40;
export const POWER_MAX_DBM = 40;

export interface Hello {
  kind: "hello";
  ts: number;
  protocol: number;
  node: number;
  peer: number;
  channel: number;
}

export interface ChatText {
  kind: "chat_text";
  ts: number;
  src: number;
  dst: number;
  text: string;
}

export interface VoiceMarker {
  kind: "voice_marker";
  ts: number;
  src: number;
  dst: number;
  chunk: number;
}

export interface LinkEvent {
  kind: "link_event";
  ts: number;
  node: number;
  event: string;
  old_phase: string;
  new_phase: string;
  channel: number;
}

export interface HandshakeFailed {
  kind: "handshake_failed";
  ts: number;
  node: number;
}

export interface SpectrumSnapshot {
  kind: "spectrum_snapshot";
  ts: number;
  channel: number;
  bins: number[];
}

export interface JammerState {
  kind: "jammer_state";
  ts: number;
  enabled: boolean;
  dwell_s: number;
  power_dbm: number;
}

export interface ErrorMessage {
  kind: "error";
  ts: number;
  message: string;
}

export type GatewayMessage =
  | Hello
  | ChatText
  | VoiceMarker
  | LinkEvent
  | HandshakeFailed
  | SpectrumSnapshot
  | JammerState
  | ErrorMessage;

type FieldSpec = Record<string, "number" | "string" | "boolean" | "number[]">;

const MESSAGE_FIELDS: Record<GatewayMessage["kind"], FieldSpec> = {
  hello: { protocol: "number", node: "number", peer: "number", channel: "number" },
  chat_text: { src: "number", dst: "number", text: "string" },
  voice_marker: { src: "number", dst: "number", chunk: "number" },
  link_event: {
    node: "number",
    event: "string",
    old_phase: "string",
    new_phase: "string",
    channel: "number",
  },
  handshake_failed: { node: "number" },
  spectrum_snapshot: { channel: "number", bins: "number[]" },
  jammer_state: { enabled: "boolean", dwell_s: "number", power_dbm: "number" },
  error: { message: "string" },
};

function fieldOk(value: unknown, expected: FieldSpec[string]): boolean {
  if (expected === "number[]") {
    return Array.isArray(value) && value.every((v) => typeof v === "number");
  }
  return typeof value === expected;
}

/**
 * Parse one line from the gateway. Returns null for anything that is not a
 * well-formed protocol-v1 message; the caller decides how loudly to complain.
 */
export function parseMessage(line: string): GatewayMessage | null {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    return null;
  }
  const msg = raw as Record<string, unknown>;
  const kind = msg.kind;
  if (typeof kind !== "string" || !(kind in MESSAGE_FIELDS)) {
    return null;
  }
  if (typeof msg.ts !== "number") {
    return null;
  }
  const fields = MESSAGE_FIELDS[kind as GatewayMessage["kind"]];
  for (const [name, expected] of Object.entries(fields)) {
    if (!fieldOk(msg[name], expected)) {
      return null;
    }
  }
  return msg as unknown as GatewayMessage;
}

/** Outbound command: queue text for transmission to the peer. */
export function chatTextCommand(text: string): string {
  return JSON.stringify({ kind: "chat_text", text });
}

/** Outbound command: queue a best-effort voice transmission. */
export function voiceCommand(chunks: number): string {
  if (!Number.isInteger(chunks) || chunks < 1) {
    throw new RangeError(`chunks must be a positive integer, got ${chunks}`);
  }
  return JSON.stringify({ kind: "voice", chunks });
}

export interface JammerCommandFields {
  enabled: boolean;
  dwellS?: number;
  powerDbm?: number;
}

/**
 * Outbound command: reconfigure the interference source. Validates locally
 * so an impossible dwell never reaches the wire.
 */
export function jammerCommand(fields: JammerCommandFields): string {
  const out: Record<string, unknown> = {
    kind: "jammer_command",
    enabled: fields.enabled,
  };
  if (fields.dwellS !== undefined) {
    if (!Number.isFinite(fields.dwellS) || fields.dwellS <= DWELL_MIN_S) {
      throw new RangeError(`dwell must be > ${DWELL_MIN_S} s`);
    }
    out.dwell_s = fields.dwellS;
  }
  if (fields.powerDbm !== undefined) {
    if (
      !Number.isFinite(fields.powerDbm) ||
      fields.powerDbm < POWER_MIN_DBM ||
      fields.powerDbm > POWER_MAX_DBM
    ) {
      throw new RangeError(
        `power must be within ${POWER_MIN_DBM}..${POWER_MAX_DBM} dBm`,
      );
    }
    out.power_dbm = fields.powerDbm;
  }
  return JSON.stringify(out);
}
