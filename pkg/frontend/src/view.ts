// View state: camera math, corner snapping, and display formatting.
// World units are inches; the camera maps them to screen pixels.

import type { Alternative, Proposal, SessionState } from "./types.js";

export interface Camera {
  scale: number; // screen px per inch
  tx: number; // screen x of world origin
  ty: number;
}

export const SNAP_RADIUS_INCHES = 10; // matches the server's duplicate rule

export function worldToScreen(cam: Camera, p: [number, number]): [number, number] {
  return [p[0] * cam.scale + cam.tx, p[1] * cam.scale + cam.ty];
}

export function screenToWorld(cam: Camera, p: [number, number]): [number, number] {
  return [(p[0] - cam.tx) / cam.scale, (p[1] - cam.ty) / cam.scale];
}

export function panBy(cam: Camera, dx: number, dy: number): Camera {
  return { ...cam, tx: cam.tx + dx, ty: cam.ty + dy };
}

/** Zoom by a factor keeping the given screen point fixed. */
export function zoomAt(cam: Camera, screenPt: [number, number], factor: number): Camera {
  const scale = Math.min(64, Math.max(1 / 64, cam.scale * factor));
  const eff = scale / cam.scale;
  return {
    scale,
    tx: screenPt[0] - (screenPt[0] - cam.tx) * eff,
    ty: screenPt[1] - (screenPt[1] - cam.ty) * eff,
  };
}

export function fitCamera(
  extent: [number, number] | null,
  viewport: [number, number],
  pad = 20,
): Camera {
  if (!extent) return { scale: 2, tx: pad, ty: pad };
  const scale = Math.min(
    (viewport[0] - 2 * pad) / extent[0],
    (viewport[1] - 2 * pad) / extent[1],
  );
  return { scale, tx: pad, ty: pad };
}

/** Snap a world point to the nearest known corner within the snap radius. */
export function snapToCorner(
  p: [number, number],
  corners: [number, number][],
  radius = SNAP_RADIUS_INCHES,
): [number, number] {
  let best: [number, number] | null = null;
  let bestD = radius;
  for (const c of corners) {
    const d = Math.hypot(p[0] - c[0], p[1] - c[1]);
    if (d <= bestD) {
      bestD = d;
      best = c;
    }
  }
  return best ? [best[0], best[1]] : p;
}

/** Inches to architect-style feet-and-inches, e.g. 52 -> 4'-4". */
export function formatFeetInches(inches: number): string {
  const sign = inches < 0 ? "-" : "";
  const total = Math.round(Math.abs(inches));
  const feet = Math.floor(total / 12);
  const rest = total - feet * 12;
  return `${sign}${feet}'-${rest}"`;
}

export interface Layers {
  density: boolean;
  walls: boolean;
  proposals: boolean;
  corners: boolean;
}

export interface ViewState {
  session: SessionState | null;
  proposals: Proposal[];
  proposalsRevision: number; // revision the proposals were fetched at
  alternatives: Alternative[] | null;
  selectedProposal: number;
  layers: Layers;
  camera: Camera;
  notice: string | null;
  pendingWallStart: [number, number] | null;
  userWallIds: string[]; // walls this client drew, newest last (undo stack)
}

export function initialViewState(): ViewState {
  return {
    session: null,
    proposals: [],
    proposalsRevision: -1,
    alternatives: null,
    selectedProposal: 0,
    layers: { density: true, walls: true, proposals: true, corners: true },
    camera: { scale: 2, tx: 20, ty: 20 },
    notice: null,
    pendingWallStart: null,
    userWallIds: [],
  };
}

/** Proposals fetched at an older revision are stale until a refresh. */
export function proposalsStale(v: ViewState): boolean {
  return v.session !== null && v.proposalsRevision !== v.session.revision;
}
