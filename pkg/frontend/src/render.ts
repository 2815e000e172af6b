// Canvas rendering of the studio scene. Drawing goes through a narrow 2D
// context interface so tests can record operations without a DOM.

import { proposalsStale, worldToScreen, type ViewState } from "./view.js";

export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  textAlign: string;
  textBaseline: string;
  setLineDash(segments: number[]): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
  drawImage?(img: unknown, x: number, y: number, w: number, h: number): void;
}

export const COLORS = {
  background: "#11151c",
  density: "#2c3e50",
  wall: "#e8e8e8",
  oldWall: "#9aa3ad",
  proposal: "#53b1fd",
  staleProposal: "#5a6472",
  alternative: "#ffb020",
  corner: "#7bd88f",
  badgeText: "#0b0e13",
  notice: "#ff5d5d",
  pending: "#d0a0ff",
};

function drawSegment(
  ctx: Ctx2D,
  view: ViewState,
  wall: { x0: number; y0: number; x1: number; y1: number },
): void {
  const a = worldToScreen(view.camera, [wall.x0, wall.y0]);
  const b = worldToScreen(view.camera, [wall.x1, wall.y1]);
  ctx.beginPath();
  ctx.moveTo(a[0], a[1]);
  ctx.lineTo(b[0], b[1]);
  ctx.stroke();
}

export function renderScene(
  ctx: Ctx2D,
  view: ViewState,
  size: [number, number],
  density?: unknown,
): void {
  ctx.clearRect(0, 0, size[0], size[1]);
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, size[0], size[1]);

  const session = view.session;
  if (!session) return;

  if (view.layers.density && session.extent) {
    const [ox, oy] = worldToScreen(view.camera, [0, 0]);
    const w = session.extent[0] * view.camera.scale;
    const h = session.extent[1] * view.camera.scale;
    if (density && ctx.drawImage) {
      ctx.drawImage(density, ox, oy, w, h);
    } else {
      ctx.fillStyle = COLORS.density;
      ctx.fillRect(ox, oy, w, h);
    }
  }

  if (view.layers.corners) {
    ctx.fillStyle = COLORS.corner;
    for (const [cx, cy] of session.corners) {
      const p = worldToScreen(view.camera, [cx, cy]);
      ctx.beginPath();
      ctx.arc(p[0], p[1], 2.5, 0, Math.PI * 2);
      ctx.fill();
    }
  }

  if (view.layers.walls) {
    ctx.setLineDash([]);
    for (const wall of session.walls) {
      ctx.strokeStyle =
        (wall.timestep ?? 10) >= 10 ? COLORS.oldWall : COLORS.wall;
      ctx.lineWidth = Math.max(2, (wall.thickness ?? 1) * view.camera.scale * 0.5);
      drawSegment(ctx, view, wall);
    }
  }

  if (view.layers.proposals && view.proposals.length > 0) {
    const stale = proposalsStale(view);
    ctx.strokeStyle = stale ? COLORS.staleProposal : COLORS.proposal;
    ctx.lineWidth = 2;
    ctx.setLineDash([6, 4]);
    view.proposals.forEach((p) => drawSegment(ctx, view, p));
    ctx.setLineDash([]);
    // order badges 1..N in rollout order
    ctx.font = "11px sans-serif";
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    view.proposals.forEach((p, i) => {
      const m = worldToScreen(view.camera, [
        (p.x0 + p.x1) / 2,
        (p.y0 + p.y1) / 2,
      ]);
      ctx.fillStyle = stale ? COLORS.staleProposal : COLORS.proposal;
      ctx.beginPath();
      ctx.arc(m[0], m[1], 8, 0, Math.PI * 2);
      ctx.fill();
      ctx.fillStyle = COLORS.badgeText;
      ctx.fillText(String(i + 1), m[0], m[1]);
    });
  }

  if (view.alternatives) {
    ctx.strokeStyle = COLORS.alternative;
    ctx.lineWidth = 3;
    ctx.setLineDash([3, 3]);
    view.alternatives.forEach((alt) => drawSegment(ctx, view, alt));
    ctx.setLineDash([]);
  }

  if (view.pendingWallStart) {
    const p = worldToScreen(view.camera, view.pendingWallStart);
    ctx.fillStyle = COLORS.pending;
    ctx.beginPath();
    ctx.arc(p[0], p[1], 4, 0, Math.PI * 2);
    ctx.fill();
  }

  if (view.notice) {
    ctx.fillStyle = COLORS.notice;
    ctx.fillRect(0, 0, size[0], 26);
    ctx.fillStyle = "#ffffff";
    ctx.font = "13px sans-serif";
    ctx.textAlign = "left";
    ctx.textBaseline = "middle";
    ctx.fillText(view.notice, 8, 13);
  }
}
