/** Typed HTTP client for the VQA service. All service access goes through here. */

export interface TopKEntry {
  answer: string;
  prob: number;
}

export interface PredictResponse {
  answer: string;
  confidence: number;
  top_k: TopKEntry[];
  model_id: string;
  latency_ms: number;
}

export interface HealthResponse {
  status: string;
  model: string;
}

export interface VocabResponse {
  answers: string[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  get baseUrl(): string {
    return this.base;
  }

  health(): Promise<HealthResponse> {
    return this.send<HealthResponse>("/health", { method: "GET" });
  }

  vocab(): Promise<VocabResponse> {
    return this.send<VocabResponse>("/vocab", { method: "GET" });
  }

  predict(imageBase64: string, question: string, topK = 5): Promise<PredictResponse> {
    return this.send<PredictResponse>("/predict", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image: imageBase64, question, top_k: topK }),
    });
  }

  private async send<T>(path: string, init: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, init);
    const body: unknown = await response.json().catch(() => null);
    if (!response.ok) {
      const detail =
        body !== null && typeof body === "object" && "error" in body && typeof body.error === "string"
          ? body.error
          : `service error ${response.status}`;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }
}
