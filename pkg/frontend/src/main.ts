/** DOM wiring for the console. All logic lives in state/api/render. */

import { ApiClient, ApiError } from "./api.js";
import { ConsoleState, DEBOUNCE_MS, debounce } from "./state.js";
import { renderError, renderHistoryLabel, renderResults } from "./render.js";
import type { Mode } from "./types.js";

const state = new ConsoleState();
const api = new ApiClient(window.location.origin.replace(/\/$/, ""));

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const textInput = el<HTMLInputElement>("text-query");
const imageUrlInput = el<HTMLInputElement>("image-url");
const imageFileInput = el<HTMLInputElement>("image-file");
const alphaSlider = el<HTMLInputElement>("alpha");
const alphaValue = el<HTMLSpanElement>("alpha-value");
const kSelect = el<HTMLSelectElement>("k");
const resultsBox = el<HTMLDivElement>("results");
const statusBox = el<HTMLDivElement>("status");
const historyButton = el<HTMLButtonElement>("history-back");
const submitButtons: Record<Mode, HTMLButtonElement> = {
  text: el<HTMLButtonElement>("submit-text"),
  image: el<HTMLButtonElement>("submit-image"),
  multimodal: el<HTMLButtonElement>("submit-multimodal"),
};

function syncInputs(): void {
  state.text = textInput.value;
  state.imageRef = imageUrlInput.value;
  state.setAlpha(parseFloat(alphaSlider.value));
  state.k = parseInt(kSelect.value, 10);
  alphaValue.textContent = state.alpha.toFixed(2);
  for (const mode of ["text", "image", "multimodal"] as Mode[]) {
    submitButtons[mode].disabled = !state.canSubmit(mode);
  }
  historyButton.textContent = renderHistoryLabel(state.history.length);
  historyButton.disabled = state.history.length < 2;
}

function imageInput() {
  return state.imageB64 !== null
    ? { imageB64: state.imageB64 }
    : { url: state.imageRef };
}

async function submit(mode: Mode): Promise<void> {
  if (!state.canSubmit(mode)) return;
  const sequence = state.nextSequence();
  statusBox.textContent = "searching…";
  try {
    const response =
      mode === "text"
        ? await api.searchText(state.text, state.k)
        : mode === "image"
          ? await api.searchImage(imageInput(), state.k)
          : await api.searchMultimodal(state.text, imageInput(), state.alpha, state.k);
    if (!state.acceptResponse(sequence, mode, response)) {
      return; // superseded by a newer submission
    }
    resultsBox.innerHTML = renderResults(response);
    statusBox.textContent = `${response.count} results`;
  } catch (err) {
    if (err instanceof ApiError) {
      resultsBox.innerHTML = renderError(err.code, err.message);
      statusBox.textContent = err.status === 0 ? "network error — retry?" : "";
    } else {
      resultsBox.innerHTML = renderError("error", String(err));
      statusBox.textContent = "";
    }
  }
  syncInputs();
}

const debouncedMultimodal = debounce(() => void submit("multimodal"), DEBOUNCE_MS);

for (const [mode, button] of Object.entries(submitButtons) as [Mode, HTMLButtonElement][]) {
  button.addEventListener("click", () => void submit(mode));
}

for (const input of [textInput, imageUrlInput, kSelect]) {
  input.addEventListener("input", syncInputs);
}

alphaSlider.addEventListener("input", syncInputs);
alphaSlider.addEventListener("change", () => {
  // re-query on slider release when both inputs are live
  syncInputs();
  if (state.canSubmit("multimodal")) debouncedMultimodal();
});

imageFileInput.addEventListener("change", () => {
  const file = imageFileInput.files?.[0];
  if (!file) return;
  const reader = new FileReader();
  reader.onload = () => {
    const url = reader.result as string;
    state.imageB64 = url.slice(url.indexOf(",") + 1);
    state.imageRef = file.name;
    imageUrlInput.value = file.name;
    syncInputs();
  };
  reader.readAsDataURL(file);
});

historyButton.addEventListener("click", () => {
  const entry = state.back();
  if (!entry) return;
  textInput.value = entry.text;
  imageUrlInput.value = entry.imageRef;
  alphaSlider.value = String(entry.alpha);
  kSelect.value = String(entry.k);
  resultsBox.innerHTML = renderResults(entry.response); // cached, no re-query
  statusBox.textContent = `${entry.response.count} results (from history)`;
  syncInputs();
});

resultsBox.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  if (target.classList.contains("use-as-query")) {
    const iiif = target.dataset.iiif ?? "";
    state.useAsImageQuery(iiif);
    imageUrlInput.value = iiif;
    syncInputs();
    void submit("image");
  }
});

void api.health().then((ok) => {
  statusBox.textContent = ok ? "service ready" : "service unreachable";
});
syncInputs();
