/** Browser wiring: renders the session state and forwards user actions
 * to the controller.  All logic that is testable without a DOM lives in
 * the sibling modules; this file only builds elements and handles
 * events. */

import { ApiClient } from "./api.js";
import { overlayVariance, renderPreview } from "./colormap.js";
import { SessionController, type ViewState } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function drawMode(
  canvas: HTMLCanvasElement,
  state: ViewState,
  index: number,
): void {
  const mode = state.modes[index];
  if (!mode) return;
  let image = renderPreview(mode.preview);
  if (state.showVariance && state.variance) {
    image = overlayVariance(image, state.variance.preview);
  }
  canvas.width = image.width;
  canvas.height = image.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.putImageData(
    new ImageData(image.pixels, image.width, image.height),
    0,
    0,
  );
  if (index === state.active) {
    ctx.strokeStyle = "#ffffff";
    ctx.lineWidth = 1;
    for (const rect of state.pending.filter((r) => r.mode === index)) {
      ctx.strokeRect(rect.x + 0.5, rect.y + 0.5, rect.w - 1, rect.h - 1);
    }
  }
}

function attachDragHandler(
  canvas: HTMLCanvasElement,
  controller: SessionController,
): void {
  let start: { x: number; y: number } | null = null;
  const toImage = (ev: MouseEvent) => {
    const box = canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - box.left) / box.width) * canvas.width,
      y: ((ev.clientY - box.top) / box.height) * canvas.height,
    };
  };
  canvas.addEventListener("mousedown", (ev) => {
    start = toImage(ev);
  });
  canvas.addEventListener("mouseup", (ev) => {
    if (!start) return;
    const end = toImage(ev);
    controller.addDrag({ x0: start.x, y0: start.y, x1: end.x, y1: end.y });
    start = null;
  });
  canvas.addEventListener("mouseleave", () => {
    start = null;
  });
}

function metricsTable(metrics: Record<string, number>): HTMLElement {
  const table = el("table", "metrics");
  for (const [key, value] of Object.entries(metrics)) {
    const row = el("tr");
    row.append(el("td", "", key), el("td", "", String(value)));
    table.append(row);
  }
  return table;
}

function render(
  root: HTMLElement,
  controller: SessionController,
  state: ViewState,
): void {
  root.replaceChildren();

  if (state.phase === "expired") {
    const panel = el("div", "screen");
    panel.append(
      el("h2", "", "Session expired"),
      el("p", "", state.error ?? "This session no longer exists."),
      el("p", "", "Create a new session from the start page."),
    );
    root.append(panel);
    return;
  }
  if (state.phase === "loading") {
    root.append(el("p", "status", "Loading session…"));
    return;
  }

  const info = state.info;
  const header = el("div", "header");
  header.append(
    el("h2", "", `Session ${state.sessionId}`),
    el(
      "span",
      "status",
      `revision ${info?.revision ?? "?"} — ${state.phase}` +
        (state.range
          ? ` — depth ${state.range.lo.toFixed(3)}…${state.range.hi.toFixed(3)} m`
          : ""),
    ),
  );
  root.append(header);

  if (state.phase === "busy") {
    const banner = el("div", "banner");
    banner.append(
      el("span", "", `Server is busy solving: ${state.error ?? ""}`),
    );
    const retry = el("button", "", "Retry");
    retry.addEventListener("click", () => void controller.retry());
    banner.append(retry);
    root.append(banner);
  } else if (state.error) {
    root.append(el("div", "banner error", state.error));
  }

  const busy = state.phase !== "idle";

  // ------------------------------------------------------------ gallery
  const gallery = el("div", "gallery");
  state.modes.forEach((mode, i) => {
    const cell = el("figure", i === state.active ? "mode active" : "mode");
    const canvas = el("canvas");
    drawMode(canvas, state, i);
    canvas.addEventListener("click", () => controller.setActive(i));
    const badges: string[] = [];
    if (info?.selected === i) badges.push("selected");
    if (info?.annotated_modes.includes(i)) badges.push("annotated");
    const caption = el(
      "figcaption",
      "",
      `#${i} ${mode.provenance}` +
        (badges.length ? ` [${badges.join(", ")}]` : ""),
    );
    cell.append(canvas, caption);
    gallery.append(cell);
  });
  root.append(gallery);

  // ------------------------------------------------------------- editor
  const editor = el("div", "editor");
  const big = el("canvas", "annotate");
  drawMode(big, state, state.active);
  attachDragHandler(big, controller);
  editor.append(big);

  const side = el("div", "side");
  side.append(
    el(
      "p",
      "hint",
      "Drag on the image to mark a wrong region of the active mode, " +
        "then request the next estimate.",
    ),
  );

  const rectList = el("ul", "rects");
  state.pending.forEach((rect, i) => {
    const item = el(
      "li",
      "",
      `mode ${rect.mode}: (${rect.x}, ${rect.y}) ${rect.w}×${rect.h} `,
    );
    const remove = el("button", "", "remove");
    remove.addEventListener("click", () => controller.removeRect(i));
    item.append(remove);
    rectList.append(item);
  });
  side.append(rectList);

  const lambdaRow = el("div", "row");
  const lambdaInput = el("input");
  lambdaInput.type = "number";
  lambdaInput.step = "any";
  lambdaInput.placeholder = "server default";
  if (state.lambda !== undefined) lambdaInput.value = String(state.lambda);
  lambdaInput.addEventListener("change", () => {
    const v = lambdaInput.value.trim();
    controller.setLambda(v === "" ? undefined : Number(v));
  });
  lambdaRow.append(el("label", "", "diversity weight"), lambdaInput);
  side.append(lambdaRow);

  const actions = el("div", "row");
  const next = el("button", "", "Request next mode");
  next.disabled = busy;
  next.addEventListener("click", () => void controller.requestNext());
  const select = el("button", "", `Select mode #${state.active}`);
  select.disabled = busy;
  select.addEventListener("click", () => void controller.select(state.active));
  const variance = el(
    "button",
    "",
    state.showVariance ? "Hide ambiguity overlay" : "Show ambiguity overlay",
  );
  variance.addEventListener("click", () => void controller.toggleVariance());
  actions.append(next, select, variance);
  side.append(actions);

  if (state.metrics) {
    side.append(el("h3", "", "Selected-mode accuracy"), metricsTable(state.metrics));
  } else if (info && info.selected !== null) {
    side.append(el("p", "", `Mode #${info.selected} selected.`));
  }

  editor.append(side);
  root.append(editor);
}

function createForm(root: HTMLElement, api: ApiClient): void {
  root.replaceChildren();
  const panel = el("div", "screen");
  panel.append(el("h2", "", "New synthetic session"));
  const spec = el("textarea");
  spec.rows = 6;
  spec.value = JSON.stringify(
    {
      scene_spec: { random: { height: 65, width: 65, n_rects: 5, seed: 1 } },
      sampler_cfg: { preset: "ambiguous" },
      patch: 9,
      stride: 2,
      n_samples: 20,
      seed: 1,
    },
    null,
    2,
  );
  const button = el("button", "", "Create session");
  const message = el("p", "status");
  button.addEventListener("click", () => {
    void (async () => {
      try {
        const body = JSON.parse(spec.value) as Record<string, unknown>;
        const created = await api.createSession(body);
        const url = new URL(window.location.href);
        url.searchParams.set("session", created.id);
        window.location.href = url.toString();
      } catch (err) {
        message.textContent = err instanceof Error ? err.message : String(err);
      }
    })();
  });
  panel.append(spec, button, message);
  root.append(panel);
}

export async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app root element");
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? "http://127.0.0.1:8000";
  const api = new ApiClient(base);
  const sessionId = params.get("session");
  if (!sessionId) {
    createForm(root, api);
    return;
  }
  const controller = await SessionController.open(api, sessionId);
  controller.subscribe((state) => render(root, controller, state));
  render(root, controller, controller.state);
}

if (typeof document !== "undefined") {
  void boot();
}
