/** Client-side image checks mirroring the service's hard limits. */

/** Decoded-size ceiling enforced by the service; checked here before any bytes are read. */
export const MAX_IMAGE_BYTES = 8 * 1024 * 1024;

const ACCEPTED_TYPES = new Set(["image/png", "image/jpeg"]);
const ACCEPTED_EXTENSIONS = [".png", ".jpg", ".jpeg"];

export type Validation = { ok: true } | { ok: false; reason: string };

export interface FileLike {
  name: string;
  size: number;
  type?: string;
}

export function validateImageFile(file: FileLike): Validation {
  if (file.size === 0) {
    return { ok: false, reason: "file is empty" };
  }
  if (file.size > MAX_IMAGE_BYTES) {
    return {
      ok: false,
      reason: `image is ${file.size} bytes; the service accepts at most ${MAX_IMAGE_BYTES}`,
    };
  }
  const type = file.type ?? "";
  if (type !== "") {
    if (!ACCEPTED_TYPES.has(type)) {
      return { ok: false, reason: `unsupported type ${type}; use PNG or JPEG` };
    }
    return { ok: true };
  }
  const name = file.name.toLowerCase();
  if (!ACCEPTED_EXTENSIONS.some((ext) => name.endsWith(ext))) {
    return { ok: false, reason: `unsupported file ${file.name}; use PNG or JPEG` };
  }
  return { ok: true };
}

export function fileToDataUrl(file: Blob): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(reader.result as string);
    reader.onerror = () => reject(reader.error ?? new Error("could not read file"));
    reader.readAsDataURL(file);
  });
}

export function dataUrlToBase64(dataUrl: string): string {
  const comma = dataUrl.indexOf(",");
  if (comma < 0 || !dataUrl.slice(0, comma).endsWith(";base64")) {
    throw new Error("not a base64 data URL");
  }
  return dataUrl.slice(comma + 1);
}

export async function fileToBase64(file: Blob): Promise<string> {
  return dataUrlToBase64(await fileToDataUrl(file));
}
