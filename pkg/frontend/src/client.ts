// Thin typed client over the assist service HTTP API. Mutations carry the
// revision they were computed against; a 409 response surfaces as
// {ok: false, conflict: true} for the app to refresh on.

import type { Alternative, Proposal, SessionState } from "./types.js";

export interface ApiResult<T> {
  ok: boolean;
  status: number;
  conflict: boolean;
  data: T | null;
  error?: string;
}

async function asResult<T>(resp: Response): Promise<ApiResult<T>> {
  let data: unknown = null;
  try {
    data = await resp.json();
  } catch {
    data = null;
  }
  return {
    ok: resp.ok,
    status: resp.status,
    conflict: resp.status === 409,
    data: resp.ok ? (data as T) : null,
    error: resp.ok ? undefined : JSON.stringify(data),
  };
}

export class ServiceClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async post<T>(path: string, body: unknown): Promise<ApiResult<T>> {
    const resp = await fetch(this.url(path), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return asResult<T>(resp);
  }

  private async get<T>(path: string): Promise<ApiResult<T>> {
    return asResult<T>(await fetch(this.url(path)));
  }

  createSession(payload: Record<string, unknown>): Promise<ApiResult<SessionState>> {
    return this.post("/sessions", payload);
  }

  state(sid: string): Promise<ApiResult<SessionState>> {
    return this.get(`/sessions/${sid}/state`);
  }

  proposals(
    sid: string,
    n?: number,
  ): Promise<ApiResult<{ revision: number; proposals: Proposal[] }>> {
    const q = n === undefined ? "" : `?n=${n}`;
    return this.get(`/sessions/${sid}/proposals${q}`);
  }

  alternatives(
    sid: string,
  ): Promise<ApiResult<{ revision: number; alternatives: Alternative[] }>> {
    return this.get(`/sessions/${sid}/alternatives`);
  }

  accept(sid: string, count: number, revision: number): Promise<ApiResult<SessionState>> {
    return this.post(`/sessions/${sid}/accept`, { count, revision });
  }

  reject(sid: string, revision: number): Promise<ApiResult<SessionState>> {
    return this.post(`/sessions/${sid}/reject`, { revision });
  }

  choose(sid: string, index: number, revision: number): Promise<ApiResult<SessionState>> {
    return this.post(`/sessions/${sid}/choose`, { index, revision });
  }

  addWall(
    sid: string,
    wall: { x0: number; y0: number; x1: number; y1: number; thickness?: number | null },
    revision: number,
  ): Promise<ApiResult<SessionState>> {
    return this.post(`/sessions/${sid}/walls`, { ...wall, revision });
  }

  async modifyWall(
    sid: string,
    id: string,
    patch: Record<string, unknown>,
    revision: number,
  ): Promise<ApiResult<SessionState>> {
    const resp = await fetch(this.url(`/sessions/${sid}/walls/${id}`), {
      method: "PATCH",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ...patch, revision }),
    });
    return asResult<SessionState>(resp);
  }

  async deleteWall(sid: string, id: string, revision: number): Promise<ApiResult<SessionState>> {
    const resp = await fetch(this.url(`/sessions/${sid}/walls/${id}?revision=${revision}`), {
      method: "DELETE",
    });
    return asResult<SessionState>(resp);
  }

  addCorner(sid: string, x: number, y: number, revision: number): Promise<ApiResult<SessionState>> {
    return this.post(`/sessions/${sid}/corners`, { x, y, revision });
  }

  exportSession(sid: string): Promise<ApiResult<{ sessions: unknown[] }>> {
    return this.get(`/sessions/${sid}/export`);
  }

  densityPngUrl(sid: string, plane = 0): string {
    return this.url(`/sessions/${sid}/density.png?plane=${plane}`);
  }

  wsUrl(sid: string): string {
    return `${this.baseUrl.replace(/^http/, "ws")}/sessions/${sid}/ws`;
  }
}
