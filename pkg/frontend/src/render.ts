/** HTML renderers. Pure string-in/string-out so tests can compare output
 * without a browser; main.ts owns the actual DOM. */

import { thumbnailUrl } from "./api.js";
import type { SearchResponse, SearchResult } from "./types.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Scores display at 4 decimals; the exact service value rides along in a
 * title attribute so nothing is ever recomputed client-side. */
export function formatScore(value: number | undefined): string {
  if (value === undefined) return "";
  return value.toFixed(4);
}

export function renderResult(result: SearchResult): string {
  const thumb = escapeHtml(thumbnailUrl(result.iiif_url));
  const iiif = escapeHtml(result.iiif_url);
  const resource = escapeHtml(result.resource_url);
  const raw = result.raw_score;
  const softmax = result.softmax_score;
  const scoreBits = [
    raw === undefined
      ? ""
      : `<span class="score raw" title="${raw}">raw ${formatScore(raw)}</span>`,
    softmax === undefined
      ? ""
      : `<span class="score softmax" title="${softmax}">softmax ${formatScore(softmax)}</span>`,
  ].filter(Boolean).join(" ");
  return [
    `<figure class="result" data-rank="${result.rank}">`,
    `<a href="${iiif}" target="_blank" rel="noopener">`,
    `<img src="${thumb}" alt="result ${result.rank}" loading="lazy">`,
    `</a>`,
    `<figcaption>`,
    `<span class="rank">#${result.rank}</span> ${scoreBits}`,
    `<a class="resource" href="${resource}" target="_blank" rel="noopener">record</a>`,
    `<button class="use-as-query" data-iiif="${iiif}">search similar</button>`,
    `</figcaption>`,
    `</figure>`,
  ].join("");
}

export function renderResults(response: SearchResponse): string {
  if (response.results.length === 0) {
    return `<p class="empty">No results.</p>`;
  }
  const warnings = response.warnings
    .map((w) => `<p class="warning">${escapeHtml(w)}</p>`)
    .join("");
  const grid = response.results.map(renderResult).join("\n");
  return `${warnings}<div class="grid">${grid}</div>`;
}

export function renderError(code: string, message: string): string {
  return (
    `<div class="error"><strong>${escapeHtml(code)}</strong>: ` +
    `${escapeHtml(message)}</div>`
  );
}

export function renderHistoryLabel(count: number): string {
  return count > 1 ? `history (${count})` : "history";
}
