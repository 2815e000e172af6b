// Browser bootstrap: canvas, toolbar wiring, pan/zoom input, and the live
// proposal push channel.

import { ServiceClient } from "./client.js";
import { StudioApp } from "./app.js";
import { renderScene } from "./render.js";
import {
  fitCamera,
  formatFeetInches,
  panBy,
  screenToWorld,
  zoomAt,
} from "./view.js";

type Tool = "pan" | "wall" | "corner";

async function boot(): Promise<void> {
  const canvas = document.getElementById("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const status = document.getElementById("status")!;
  const params = new URLSearchParams(window.location.search);
  const base = params.get("service") ?? "http://127.0.0.1:8787";

  const client = new ServiceClient(base);
  const app = new StudioApp(client);
  const payload: Record<string, unknown> = {};
  if (params.get("floor_dir")) {
    payload.floor_dir = params.get("floor_dir");
    payload.oracle_corners = true;
  }
  await app.init(payload);
  app.view.camera = fitCamera(app.view.session!.extent, [canvas.width, canvas.height]);

  let density: ImageBitmap | undefined;
  if (app.view.session!.extent) {
    const resp = await fetch(client.densityPngUrl(app.view.session!.session_id, 0));
    if (resp.ok) density = await createImageBitmap(await resp.blob());
  }

  let tool: Tool = "pan";
  for (const name of ["pan", "wall", "corner"] as Tool[]) {
    document.getElementById(`tool-${name}`)?.addEventListener("click", () => {
      tool = name;
    });
  }
  document.getElementById("accept1")?.addEventListener("click", () => void app.acceptK(1));
  document.getElementById("accept3")?.addEventListener("click", () => void app.acceptK(3));
  document.getElementById("reject")?.addEventListener("click", () => void app.reject());
  document.getElementById("alts")?.addEventListener("click", () => void app.requestAlternatives());
  document.getElementById("undo")?.addEventListener("click", () => void app.undo());
  for (const i of [0, 1, 2]) {
    document.getElementById(`alt-${i}`)?.addEventListener("click", () => void app.pickAlternative(i));
  }

  let dragging = false;
  let last: [number, number] = [0, 0];
  canvas.addEventListener("mousedown", (e) => {
    dragging = tool === "pan";
    last = [e.offsetX, e.offsetY];
  });
  canvas.addEventListener("mousemove", (e) => {
    const world = screenToWorld(app.view.camera, [e.offsetX, e.offsetY]);
    status.textContent = `${formatFeetInches(world[0])}, ${formatFeetInches(world[1])}`;
    if (dragging) {
      app.view.camera = panBy(app.view.camera, e.offsetX - last[0], e.offsetY - last[1]);
      last = [e.offsetX, e.offsetY];
    }
  });
  canvas.addEventListener("mouseup", () => {
    dragging = false;
  });
  canvas.addEventListener("click", (e) => {
    const world = screenToWorld(app.view.camera, [e.offsetX, e.offsetY]);
    if (tool === "wall") void app.clickDraw(world);
    if (tool === "corner") void app.placeCorner(world);
  });
  canvas.addEventListener("wheel", (e) => {
    e.preventDefault();
    const factor = e.deltaY < 0 ? 1.15 : 1 / 1.15;
    app.view.camera = zoomAt(app.view.camera, [e.offsetX, e.offsetY], factor);
  });

  // live pushes, with polling as the fallback channel
  try {
    const ws = new WebSocket(client.wsUrl(app.view.session!.session_id));
    ws.onmessage = (ev) => app.onPush(JSON.parse(ev.data));
    ws.onerror = () => app.startPolling();
  } catch {
    app.startPolling();
  }

  const frame = (): void => {
    renderScene(ctx, app.view, [canvas.width, canvas.height], density);
    requestAnimationFrame(frame);
  };
  frame();
}

void boot();
