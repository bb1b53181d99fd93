/** Console state and the pure reducer that folds gateway messages into it.
 *
 * Everything the UI shows derives from this state; there is no simulation
 * logic on the client, only bookkeeping of what the gateway said.
 */

import type { GatewayMessage } from "./protocol.js";

export const EVENT_LOG_LIMIT = 200;

export type Connection = "connecting" | "open" | "closed";
export type Direction = "sent" | "received";

export interface TranscriptEntry {
  ts: number;
  direction: Direction;
  text: string;
}

export interface EventEntry {
  ts: number;
  node: number;
  event: string;
  detail: string;
}

export interface JammerPanel {
  enabled: boolean;
  dwellS: number;
  powerDbm: number;
}

export interface ConsoleState {
  connection: Connection;
  protocol: number | null;
  node: number | null;
  peer: number | null;
  channel: number | null;
  transcript: TranscriptEntry[];
  events: EventEntry[];
  jammer: JammerPanel;
  spectrum: number[];
  /** Set on jam_detected, cleared once traffic flows again. */
  jamAlert: boolean;
  deliveredChars: number;
  lastError: string | null;
}

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    protocol: null,
    node: null,
    peer: null,
    channel: null,
    transcript: [],
    events: [],
    jammer: { enabled: false, dwellS: 20, powerDbm: 10 },
    spectrum: [],
    jamAlert: false,
    deliveredChars: 0,
    lastError: null,
  };
}

function pushEvent(state: ConsoleState, entry: EventEntry): EventEntry[] {
  return [...state.events, entry].slice(-EVENT_LOG_LIMIT);
}

export function applyConnection(
  state: ConsoleState,
  connection: Connection,
): ConsoleState {
  return { ...state, connection };
}

/** Record text the operator just submitted; it shows exactly once as sent. */
export function applyLocalSend(
  state: ConsoleState,
  text: string,
  ts = 0,
): ConsoleState {
  return {
    ...state,
    transcript: [...state.transcript, { ts, direction: "sent", text }],
  };
}

export function applyMessage(
  state: ConsoleState,
  msg: GatewayMessage,
): ConsoleState {
  switch (msg.kind) {
    case "hello":
      return {
        ...state,
        connection: "open",
        protocol: msg.protocol,
        node: msg.node,
        peer: msg.peer,
        channel: msg.channel,
      };

    case "chat_text": {
      if (msg.dst === state.node) {
        return {
          ...state,
          transcript: [
            ...state.transcript,
            { ts: msg.ts, direction: "received", text: msg.text },
          ],
        };
      }
      if (msg.src === state.node) {
        // The gateway echoes deliveries of our own frames; count them for
        // the status line instead of duplicating the sent entry.
        return { ...state, deliveredChars: state.deliveredChars + msg.text.length };
      }
      return state;
    }

    case "voice_marker":
      return {
        ...state,
        events: pushEvent(state, {
          ts: msg.ts,
          node: msg.src,
          event: "voice_chunk",
          detail: `chunk ${msg.chunk} to ${msg.dst}`,
        }),
      };

    case "link_event": {
      let next: ConsoleState = {
        ...state,
        events: pushEvent(state, {
          ts: msg.ts,
          node: msg.node,
          event: msg.event,
          detail: `${msg.old_phase} -> ${msg.new_phase}, ch ${msg.channel}`,
        }),
      };
      if (msg.node === state.node) {
        next = { ...next, channel: msg.channel };
      }
      if (msg.event === "jam_detected") {
        next = { ...next, jamAlert: true };
      } else if (msg.event === "traffic_resumed" || msg.event === "ack_rx") {
        next = { ...next, jamAlert: false };
      }
      return next;
    }

    case "handshake_failed":
      return {
        ...state,
        lastError: `node ${msg.node} gave up the handshake`,
        events: pushEvent(state, {
          ts: msg.ts,
          node: msg.node,
          event: "handshake_failed",
          detail: "",
        }),
      };

    case "spectrum_snapshot":
      return { ...state, spectrum: msg.bins };

    case "jammer_state":
      return {
        ...state,
        jammer: {
          enabled: msg.enabled,
          dwellS: msg.dwell_s,
          powerDbm: msg.power_dbm,
        },
      };

    case "error":
      return { ...state, lastError: msg.message };
  }
}
