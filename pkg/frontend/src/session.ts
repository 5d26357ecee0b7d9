/** Console state: the loaded image and an append-only Q&A history per image. */

import type { ApiClient, PredictResponse } from "./api.js";
import { fileToBase64, validateImageFile, type Validation } from "./validation.js";

export interface HistoryEntry {
  question: string;
  topK: number;
  response: PredictResponse;
}

export interface LoadedImage {
  id: string;
  name: string;
  base64: string;
}

export class Session {
  private image: LoadedImage | null = null;
  private readonly histories = new Map<string, HistoryEntry[]>();

  get currentImage(): LoadedImage | null {
    return this.image;
  }

  /** Switch to an image; re-loading the same id keeps its existing history. */
  loadImage(image: LoadedImage): void {
    this.image = image;
    if (!this.histories.has(image.id)) {
      this.histories.set(image.id, []);
    }
  }

  /** History for the given image id (defaults to the current image), oldest first. */
  history(id?: string): HistoryEntry[] {
    const key = id ?? this.image?.id;
    if (key === undefined) {
      return [];
    }
    return [...(this.histories.get(key) ?? [])];
  }

  async ask(client: ApiClient, question: string, topK = 5): Promise<HistoryEntry> {
    if (this.image === null) {
      throw new Error("load an image before asking a question");
    }
    const response = await client.predict(this.image.base64, question, topK);
    const entry: HistoryEntry = { question, topK, response };
    this.histories.get(this.image.id)?.push(entry);
    return entry;
  }
}

/**
 * Validate a file and, only if it passes, read it and load it into the session.
 * Oversize or wrong-type files are rejected before any bytes are read, so they
 * can never reach the network.
 */
export async function loadValidatedImage(session: Session, file: File): Promise<Validation> {
  const verdict = validateImageFile(file);
  if (!verdict.ok) {
    return verdict;
  }
  const base64 = await fileToBase64(file);
  session.loadImage({ id: `${file.name}:${file.size}`, name: file.name, base64 });
  return verdict;
}
