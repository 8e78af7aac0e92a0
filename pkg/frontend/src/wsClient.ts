/** Auto-reconnecting WebSocket client with exponential backoff.
 * The socket constructor is injectable so tests run without a browser. */

import { ConnectionState } from "./types.js";

export interface SocketLike {
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface WsClientOptions {
  url: string;
  onMessage: (raw: string) => void;
  onState?: (state: ConnectionState) => void;
  factory?: SocketFactory;
  baseDelayMs?: number;
  maxDelayMs?: number;
}

export class ReconnectingSocket {
  private socket: SocketLike | null = null;
  private delayMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = true;

  constructor(private opts: WsClientOptions) {
    this.delayMs = opts.baseDelayMs ?? 500;
  }

  connect(): void {
    this.stopped = false;
    this.open();
  }

  private open(): void {
    const factory = this.opts.factory ?? ((url: string) => new WebSocket(url) as unknown as SocketLike);
    let socket: SocketLike;
    try {
      socket = factory(this.opts.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.delayMs = this.opts.baseDelayMs ?? 500;
      this.opts.onState?.("connected");
    };
    socket.onmessage = (ev) => {
      if (typeof ev.data === "string") this.opts.onMessage(ev.data);
    };
    socket.onerror = () => {
      /* close always follows */
    };
    socket.onclose = () => {
      this.socket = null;
      if (!this.stopped) this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    this.opts.onState?.("reconnecting");
    if (this.timer !== null) return;
    this.timer = setTimeout(() => {
      this.timer = null;
      if (!this.stopped) this.open();
    }, this.delayMs);
    this.delayMs = Math.min(this.delayMs * 2, this.opts.maxDelayMs ?? 10_000);
  }

  close(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.socket?.close();
    this.socket = null;
    this.opts.onState?.("idle");
  }
}
