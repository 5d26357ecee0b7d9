import { ApiClient, ApiError } from "./api.js";
import { Session, loadValidatedImage } from "./session.js";
import { fileToDataUrl } from "./validation.js";
import {
  clearError,
  renderHistory,
  renderPreview,
  renderVocab,
  setStatus,
  showError,
} from "./ui.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

function errorMessage(err: unknown): string {
  if (err instanceof ApiError) {
    return `service error ${err.status}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

export function wireConsole(): void {
  const urlInput = byId<HTMLInputElement>("service-url");
  const connectBtn = byId<HTMLButtonElement>("connect-btn");
  const healthStatus = byId<HTMLElement>("health-status");
  const fileInput = byId<HTMLInputElement>("file-input");
  const preview = byId<HTMLImageElement>("preview");
  const imageName = byId<HTMLElement>("image-name");
  const imageError = byId<HTMLElement>("image-error");
  const questionInput = byId<HTMLInputElement>("question-input");
  const topKInput = byId<HTMLInputElement>("top-k");
  const askBtn = byId<HTMLButtonElement>("ask-btn");
  const askError = byId<HTMLElement>("ask-error");
  const historyList = byId<HTMLElement>("history-list");
  const vocabList = byId<HTMLElement>("vocab-list");

  const session = new Session();
  let client: ApiClient | null = null;

  connectBtn.addEventListener("click", () => {
    void (async () => {
      const candidate = new ApiClient(urlInput.value.trim());
      try {
        const health = await candidate.health();
        const vocab = await candidate.vocab();
        client = candidate;
        setStatus(healthStatus, `${health.status} — ${health.model}`, true);
        renderVocab(vocabList, vocab.answers);
      } catch (err) {
        client = null;
        setStatus(healthStatus, errorMessage(err), false);
      }
    })();
  });

  fileInput.addEventListener("change", () => {
    void (async () => {
      clearError(imageError);
      const file = fileInput.files?.[0];
      if (file === undefined) {
        return;
      }
      const verdict = await loadValidatedImage(session, file);
      if (!verdict.ok) {
        showError(imageError, verdict.reason);
        return;
      }
      renderPreview(preview, imageName, await fileToDataUrl(file), file.name);
      renderHistory(historyList, session.history());
    })();
  });

  askBtn.addEventListener("click", () => {
    void (async () => {
      clearError(askError);
      if (client === null) {
        showError(askError, "connect to a service first");
        return;
      }
      const question = questionInput.value.trim();
      if (question === "") {
        showError(askError, "enter a question");
        return;
      }
      const topK = Number.parseInt(topKInput.value, 10) || 5;
      try {
        await session.ask(client, question, topK);
        renderHistory(historyList, session.history());
        questionInput.value = "";
      } catch (err) {
        showError(askError, errorMessage(err));
      }
    })();
  });
}

if (typeof document !== "undefined" && document.getElementById("service-url") !== null) {
  wireConsole();
}
