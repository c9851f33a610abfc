/** Typed client for the search service. The console never computes scores;
 * everything rendered comes straight out of these responses. */

import type { ApiErrorBody, ImageInput, SearchResponse } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async post(path: string, body: unknown): Promise<SearchResponse> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, "network", String(err));
    }
    if (!response.ok) {
      let detail: ApiErrorBody = { code: "error", message: response.statusText };
      try {
        detail = (await response.json()) as ApiErrorBody;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(response.status, detail.code, detail.message);
    }
    return (await response.json()) as SearchResponse;
  }

  searchText(query: string, k: number): Promise<SearchResponse> {
    return this.post("/v1/search/text", { query, k });
  }

  searchImage(image: ImageInput, k: number): Promise<SearchResponse> {
    return this.post("/v1/search/image", {
      url: image.url,
      image_b64: image.imageB64,
      k,
    });
  }

  searchMultimodal(
    text: string,
    image: ImageInput,
    alpha: number,
    k: number,
  ): Promise<SearchResponse> {
    return this.post("/v1/search/multimodal", {
      text,
      url: image.url,
      image_b64: image.imageB64,
      alpha,
      k,
    });
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchFn(`${this.baseUrl}/v1/health`);
      return response.ok;
    } catch {
      return false;
    }
  }
}

const SIZE_SEGMENT = /\/full\/[^/]+\/0\//;

/** IIIF request for a grid thumbnail: same identifier, reduced width. */
export function thumbnailUrl(iiifUrl: string, width = 400): string {
  if (SIZE_SEGMENT.test(iiifUrl)) {
    return iiifUrl.replace(SIZE_SEGMENT, `/full/${width},/0/`);
  }
  if (/\.(jpe?g|png|gif|tiff?)$/i.test(iiifUrl) || iiifUrl.startsWith("synthetic:")) {
    return iiifUrl;
  }
  return `${iiifUrl.replace(/\/+$/, "")}/full/${width},/0/default.jpg`;
}
