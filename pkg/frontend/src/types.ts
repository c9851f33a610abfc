/** Wire types for the /v1 search API. */

export type Mode = "text" | "image" | "multimodal";

export interface SearchResult {
  rank: number;
  iiif_url: string;
  resource_url: string;
  raw_score?: number;
  softmax_score?: number;
}

export interface SearchResponse {
  results: SearchResult[];
  count: number;
  warnings: string[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export interface ImageInput {
  url?: string;
  imageB64?: string;
}

export interface HistoryEntry {
  mode: Mode;
  text: string;
  imageRef: string;
  alpha: number;
  k: number;
  response: SearchResponse;
}
