/** DOM rendering helpers, kept free of fetch/session state for testability. */

import type { HistoryEntry } from "./session.js";

export function formatPercent(p: number): string {
  return `${(p * 100).toFixed(1)}%`;
}

export function setStatus(el: HTMLElement, text: string, ok: boolean): void {
  el.textContent = text;
  el.classList.toggle("ok", ok);
  el.classList.toggle("fail", !ok);
}

export function showError(el: HTMLElement, message: string): void {
  el.textContent = message;
  el.hidden = false;
}

export function clearError(el: HTMLElement): void {
  el.textContent = "";
  el.hidden = true;
}

export function renderPreview(
  img: HTMLImageElement,
  nameEl: HTMLElement,
  dataUrl: string,
  name: string,
): void {
  img.src = dataUrl;
  img.hidden = false;
  nameEl.textContent = name;
}

export function renderVocab(list: HTMLElement, answers: string[]): void {
  list.replaceChildren(
    ...answers.map((answer) => {
      const li = document.createElement("li");
      li.textContent = answer;
      return li;
    }),
  );
}

export function renderHistory(list: HTMLElement, entries: readonly HistoryEntry[]): void {
  list.replaceChildren(
    ...entries.map((entry) => {
      const li = document.createElement("li");
      li.className = "history-entry";

      const question = document.createElement("div");
      question.className = "question";
      question.textContent = entry.question;

      const answer = document.createElement("div");
      answer.className = "answer";
      answer.textContent = `${entry.response.answer} (${formatPercent(entry.response.confidence)})`;

      const ranked = document.createElement("ol");
      ranked.className = "top-k";
      for (const { answer: text, prob } of entry.response.top_k) {
        const item = document.createElement("li");
        item.textContent = `${text} — ${formatPercent(prob)}`;
        ranked.appendChild(item);
      }

      li.append(question, answer, ranked);
      return li;
    }),
  );
}
