// Wire types mirroring the assist service JSON payloads.
// All coordinates are inches (1 px = 1 in on the server rasters).

export interface Wall {
  id?: string;
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  thickness: number | null;
  timestep?: number;
}

export interface Proposal extends Wall {
  score: number;
  seed?: boolean;
}

export interface Alternative extends Wall {
  index: number;
  score: number;
}

export interface SessionState {
  session_id: string;
  floor_id: string;
  revision: number;
  walls: Wall[];
  corners: [number, number][];
  extent: [number, number] | null;
  n_candidates: number;
}

export interface ProposalPush {
  type: "proposals";
  revision: number;
  walls: Proposal[];
}
