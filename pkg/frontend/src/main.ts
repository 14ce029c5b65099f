/** Browser wiring: binds the explorer controller to the page. */

import { ApiClient, Candidate } from "./api.js";
import {
  Busy,
  DEBOUNCE_MS,
  ExplorerController,
  Scores,
  SLIDER_MAX,
  SLIDER_MIN,
} from "./controller.js";

const SLIDER_STEP = 0.01;
const TOAST_MS = 4000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error("missing #" + id);
  return node as T;
}

const fileInput = el<HTMLInputElement>("file");
const importInput = el<HTMLInputElement>("import-file");
const previewImg = el<HTMLImageElement>("preview");
const scoreBox = el<HTMLElement>("scores");
const sliderBox = el<HTMLElement>("sliders");
const galleryBox = el<HTMLElement>("gallery");
const toastBox = el<HTMLElement>("toasts");
const statusBox = el<HTMLElement>("status");
const gbInput = el<HTMLInputElement>("gamma-base");
const gpInput = el<HTMLInputElement>("gamma-post");
const gbAuto = el<HTMLInputElement>("gamma-base-auto");
const gpAuto = el<HTMLInputElement>("gamma-post-auto");
const startsInput = el<HTMLInputElement>("starts");
const itersInput = el<HTMLInputElement>("iters");
const optimizeBtn = el<HTMLButtonElement>("optimize");
const exportTxtBtn = el<HTMLButtonElement>("export-txt");
const exportPngBtn = el<HTMLButtonElement>("export-png");
const importBtn = el<HTMLButtonElement>("import");

const api = new ApiClient("");
let sliderInputs: HTMLInputElement[] = [];
let busyState: Busy = null;

function toast(text: string): void {
  const node = document.createElement("div");
  node.className = "toast";
  node.textContent = text;
  toastBox.appendChild(node);
  setTimeout(() => node.remove(), TOAST_MS);
}

function buildSliders(dZ: number): void {
  sliderBox.textContent = "";
  sliderInputs = [];
  for (let dim = 0; dim < dZ; dim++) {
    const row = document.createElement("label");
    row.className = "slider-row";
    const name = document.createElement("span");
    name.textContent = "z" + dim;
    const input = document.createElement("input");
    input.type = "range";
    input.min = String(SLIDER_MIN);
    input.max = String(SLIDER_MAX);
    input.step = String(SLIDER_STEP);
    input.value = "0";
    input.addEventListener("input", () =>
      controller.setSlider(dim, Number(input.value)));
    const value = document.createElement("span");
    value.className = "slider-value";
    value.textContent = "0";
    row.append(name, input, value);
    sliderBox.appendChild(row);
    sliderInputs.push(input);
  }
}

function showSliders(z: readonly number[]): void {
  z.forEach((v, dim) => {
    const input = sliderInputs[dim];
    if (input === undefined) return;
    input.value = String(Math.min(SLIDER_MAX, Math.max(SLIDER_MIN, v)));
    const label = input.nextElementSibling;
    if (label !== null) label.textContent = v.toFixed(3);
  });
}

function showScores(scores: Scores | null): void {
  if (scores === null) {
    scoreBox.textContent = "—";
    return;
  }
  scoreBox.textContent =
    `Q ${scores.q.toFixed(4)}   S ${scores.s.toFixed(4)}   ` +
    `N ${scores.n.toFixed(4)}   γ_base ${scores.gammaBase.toFixed(3)}   ` +
    `γ_post ${scores.gammaPost.toFixed(3)}`;
  if (gbAuto.checked) gbInput.value = scores.gammaBase.toFixed(3);
  if (gpAuto.checked) gpInput.value = scores.gammaPost.toFixed(3);
}

function showGallery(cands: readonly Candidate[] | null): void {
  galleryBox.textContent = "";
  if (cands === null) return;
  if (cands.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty";
    empty.textContent =
      "No candidates came back — try more starts or iterations.";
    galleryBox.appendChild(empty);
    return;
  }
  cands.forEach((cand, index) => {
    const card = document.createElement("button");
    card.className = "candidate";
    card.type = "button";
    const img = document.createElement("img");
    img.src = api.previewUrl(cand.preview_url);
    img.alt = "candidate " + index;
    const label = document.createElement("span");
    label.textContent =
      `Q ${cand.q.toFixed(4)}  S ${cand.s.toFixed(4)}  N ${cand.n.toFixed(4)}`;
    card.append(img, label);
    card.addEventListener("click", () => controller.pickCandidate(index));
    galleryBox.appendChild(card);
  });
}

function showBusy(busy: Busy): void {
  busyState = busy;
  statusBox.textContent =
    busy === "optimize" ? "optimizing…" : busy === "render" ? "rendering…" : "";
  const lockSliders = busy === "optimize";
  sliderInputs.forEach((input) => { input.disabled = lockSliders; });
  optimizeBtn.disabled = busy !== null;
  const noExport = !controller.canExport();
  exportTxtBtn.disabled = noExport;
  exportPngBtn.disabled = noExport;
}

const controller = new ExplorerController(api, {
  onSession(info) {
    buildSliders(info.dZ);
    showBusy(busyState);
  },
  onSliders: showSliders,
  onPreview(url) {
    previewImg.src = url;
  },
  onScores(scores) {
    showScores(scores);
    showBusy(busyState);
  },
  onGallery: showGallery,
  onBusy: showBusy,
  onToast: toast,
}, { debounceMs: DEBOUNCE_MS });

function download(name: string, href: string): void {
  const a = document.createElement("a");
  a.href = href;
  a.download = name;
  a.click();
}

fileInput.addEventListener("change", () => {
  const file = fileInput.files?.[0];
  if (file !== undefined) void controller.open(file, file.name);
});

function gammaChanged(): void {
  controller.setGammaBase(gbAuto.checked ? null : Number(gbInput.value));
  controller.setGammaPost(gpAuto.checked ? null : Number(gpInput.value));
  gbInput.disabled = gbAuto.checked;
  gpInput.disabled = gpAuto.checked;
}
for (const node of [gbInput, gpInput, gbAuto, gpAuto]) {
  node.addEventListener("input", gammaChanged);
}

optimizeBtn.addEventListener("click", () => {
  void controller.optimize(Number(startsInput.value),
                           Number(itersInput.value));
});

exportTxtBtn.addEventListener("click", () => {
  const payload = controller.exportSettings();
  if (payload === null) return;
  const blob = new Blob([payload.text], { type: "text/plain" });
  const url = URL.createObjectURL(blob);
  download(payload.basename + ".txt", url);
  URL.revokeObjectURL(url);
});

exportPngBtn.addEventListener("click", () => {
  const payload = controller.exportSettings();
  const url = controller.exportPngUrl();
  if (payload === null || url === null) return;
  download(payload.basename + ".png", url);
});

importBtn.addEventListener("click", () => importInput.click());
importInput.addEventListener("change", () => {
  const file = importInput.files?.[0];
  if (file === undefined) return;
  void file.text().then((text) => controller.importSettings(text));
  importInput.value = "";
});

void api.health().then(
  (h) => {
    statusBox.textContent = h.model
      ? `model loaded (d_z=${h.d_z}, ${h.backend} backend)`
      : "no model loaded — fixed-kernel fallback, optimize disabled";
  },
  () => toast("service unreachable"),
);
