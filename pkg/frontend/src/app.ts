// Studio orchestration: every action issues the corresponding service call
// with the revision it saw; conflicts trigger a refresh plus a visible
// notice, so the client never diverges from the server.

import type { ApiResult, ServiceClient } from "./client.js";
import type { ProposalPush, SessionState } from "./types.js";
import {
  initialViewState,
  snapToCorner,
  type ViewState,
} from "./view.js";

export const CONFLICT_NOTICE = "Session changed elsewhere - view refreshed";

export class StudioApp {
  view: ViewState = initialViewState();
  proposalCount = 5;
  private poller: ReturnType<typeof setInterval> | null = null;

  constructor(readonly client: ServiceClient) {}

  private get sid(): string {
    if (!this.view.session) throw new Error("no live session");
    return this.view.session.session_id;
  }

  get revision(): number {
    return this.view.session?.revision ?? -1;
  }

  async init(createPayload: Record<string, unknown>): Promise<void> {
    const res = await this.client.createSession(createPayload);
    if (!res.ok || !res.data) throw new Error(`create failed: ${res.error}`);
    this.view.session = res.data;
    await this.refreshProposals();
  }

  async refresh(): Promise<void> {
    const res = await this.client.state(this.sid);
    if (res.ok && res.data) this.view.session = res.data;
    await this.refreshProposals();
  }

  async refreshProposals(): Promise<void> {
    const res = await this.client.proposals(this.sid, this.proposalCount);
    if (res.ok && res.data) {
      this.view.proposals = res.data.proposals;
      this.view.proposalsRevision = res.data.revision;
    }
  }

  /** Apply a mutation result; on a stale-revision conflict, show the notice
   * and resync. Returns true when the mutation landed. */
  private async applied(res: ApiResult<SessionState>): Promise<boolean> {
    if (res.conflict) {
      this.view.notice = CONFLICT_NOTICE;
      await this.refresh();
      return false;
    }
    if (!res.ok) {
      this.view.notice = `Request failed (${res.status})`;
      return false;
    }
    this.view.session = res.data!;
    this.view.notice = null;
    this.view.alternatives = null;
    await this.refreshProposals();
    return true;
  }

  async acceptK(k: number): Promise<boolean> {
    return this.applied(await this.client.accept(this.sid, k, this.revision));
  }

  async reject(): Promise<boolean> {
    return this.applied(await this.client.reject(this.sid, this.revision));
  }

  async requestAlternatives(): Promise<void> {
    const res = await this.client.alternatives(this.sid);
    if (res.ok && res.data) this.view.alternatives = res.data.alternatives;
  }

  /** Pick the i-th listed alternative as the next wall; rollout resumes
   * from it on the next proposal fetch. */
  async pickAlternative(i: number): Promise<boolean> {
    if (!this.view.alternatives) await this.requestAlternatives();
    const alts = this.view.alternatives ?? [];
    if (i < 0 || i >= alts.length) {
      this.view.notice = `No alternative #${i}`;
      return false;
    }
    return this.applied(
      await this.client.choose(this.sid, alts[i].index, this.revision),
    );
  }

  /** Two-click wall drawing with snap-to-corner; returns "pending" after
   * the first click, true/false for the completed second click. */
  async clickDraw(world: [number, number]): Promise<boolean | "pending"> {
    const corners = this.view.session?.corners ?? [];
    const snapped = snapToCorner(world, corners);
    if (!this.view.pendingWallStart) {
      this.view.pendingWallStart = snapped;
      return "pending";
    }
    const [x0, y0] = this.view.pendingWallStart;
    const [x1, y1] = snapped;
    this.view.pendingWallStart = null;
    if (x0 === x1 && y0 === y1) {
      this.view.notice = "Zero-length wall ignored";
      return false;
    }
    const ok = await this.applied(
      await this.client.addWall(this.sid, { x0, y0, x1, y1 }, this.revision),
    );
    if (ok) {
      const walls = this.view.session!.walls;
      const added = walls[walls.length - 1];
      if (added?.id) this.view.userWallIds.push(added.id);
    }
    return ok;
  }

  async placeCorner(world: [number, number]): Promise<boolean> {
    return this.applied(
      await this.client.addCorner(this.sid, world[0], world[1], this.revision),
    );
  }

  /** Undo deletes the last wall this client drew. */
  async undo(): Promise<boolean> {
    const id = this.view.userWallIds[this.view.userWallIds.length - 1];
    if (!id) {
      this.view.notice = "Nothing to undo";
      return false;
    }
    const ok = await this.applied(
      await this.client.deleteWall(this.sid, id, this.revision),
    );
    if (ok) this.view.userWallIds.pop();
    return ok;
  }

  /** Server push (or poll result) with a fresh proposal rollout. */
  onPush(msg: ProposalPush): void {
    if (msg.type !== "proposals") return;
    this.view.proposals = msg.walls;
    this.view.proposalsRevision = msg.revision;
    if (this.view.session && msg.revision > this.view.session.revision) {
      // another client moved the session forward; resync lazily
      void this.refresh();
    }
  }

  startPolling(intervalMs = 500): void {
    this.stopPolling();
    this.poller = setInterval(() => {
      void this.client.proposals(this.sid, this.proposalCount).then((res) => {
        if (res.ok && res.data) {
          this.onPush({
            type: "proposals",
            revision: res.data.revision,
            walls: res.data.proposals,
          });
        }
      });
    }, intervalMs);
  }

  stopPolling(): void {
    if (this.poller !== null) {
      clearInterval(this.poller);
      this.poller = null;
    }
  }
}
