import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ConnectionState } from "../src/types.js";
import { ReconnectingSocket, SocketLike } from "../src/wsClient.js";

class FakeSocket implements SocketLike {
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  closed = false;

  close(): void {
    this.closed = true;
    this.onclose?.();
  }
}

describe("reconnecting socket", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  function setup() {
    const sockets: FakeSocket[] = [];
    const messages: string[] = [];
    const states: ConnectionState[] = [];
    const client = new ReconnectingSocket({
      url: "ws://test/stream",
      onMessage: (raw) => messages.push(raw),
      onState: (s) => states.push(s),
      factory: () => {
        const s = new FakeSocket();
        sockets.push(s);
        return s;
      },
      baseDelayMs: 100,
    });
    return { client, sockets, messages, states };
  }

  it("delivers string messages", () => {
    const { client, sockets, messages } = setup();
    client.connect();
    sockets[0].onopen?.();
    sockets[0].onmessage?.({ data: "hello" });
    sockets[0].onmessage?.({ data: new ArrayBuffer(4) }); // ignored
    expect(messages).toEqual(["hello"]);
    client.close();
  });

  it("reconnects with exponential backoff and preserves the handler", () => {
    const { client, sockets, messages, states } = setup();
    client.connect();
    sockets[0].onopen?.();
    expect(states.at(-1)).toBe("connected");

    sockets[0].onclose?.(); // server drop
    expect(states.at(-1)).toBe("reconnecting");
    expect(sockets.length).toBe(1);
    vi.advanceTimersByTime(100);
    expect(sockets.length).toBe(2);

    sockets[1].onclose?.(); // fails again: doubled delay
    vi.advanceTimersByTime(100);
    expect(sockets.length).toBe(2);
    vi.advanceTimersByTime(100);
    expect(sockets.length).toBe(3);

    sockets[2].onopen?.();
    sockets[2].onmessage?.({ data: "after-reconnect" });
    expect(messages).toEqual(["after-reconnect"]);
    client.close();
    expect(states.at(-1)).toBe("idle");
  });

  it("backoff resets after a successful open", () => {
    const { client, sockets } = setup();
    client.connect();
    sockets[0].onclose?.();
    vi.advanceTimersByTime(100); // 1st retry at base delay
    sockets[1].onclose?.();
    vi.advanceTimersByTime(200); // 2nd retry at doubled delay
    sockets[2].onopen?.(); // success resets the backoff
    sockets[2].onclose?.();
    vi.advanceTimersByTime(100);
    expect(sockets.length).toBe(4); // reconnected at base delay again
    client.close();
  });

  it("close stops reconnect attempts", () => {
    const { client, sockets } = setup();
    client.connect();
    sockets[0].onopen?.();
    client.close();
    vi.advanceTimersByTime(10_000);
    expect(sockets.length).toBe(1);
  });

  it("a crashing factory schedules a retry instead of throwing", () => {
    let calls = 0;
    const client = new ReconnectingSocket({
      url: "ws://test/stream",
      onMessage: () => {},
      factory: () => {
        calls += 1;
        throw new Error("no network");
      },
      baseDelayMs: 50,
    });
    client.connect();
    vi.advanceTimersByTime(50);
    expect(calls).toBe(2);
    client.close();
  });
});
