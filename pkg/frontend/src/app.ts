import { ApiClient, ServiceError } from './api';
import { boxToDisplayRect } from './geometry';
import { StudioSession } from './session';
import { HistoryEntry } from './types';

function pngUrl(bytes: Uint8Array): string {
  return URL.createObjectURL(new Blob([bytes.slice().buffer], { type: 'image/png' }));
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function main(): Promise<void> {
  const api = new ApiClient();
  const health = await api.health();
  const session = new StudioSession(api, health.size_filter);

  const imageSelect = el<HTMLSelectElement>('image-select');
  const scaleSelect = el<HTMLSelectElement>('scale-select');
  const stagesToggle = el<HTMLInputElement>('stages-toggle');
  const submitButton = el<HTMLButtonElement>('submit');
  const clearButton = el<HTMLButtonElement>('clear-history');
  const warningsBox = el<HTMLDivElement>('warnings');
  const errorBanner = el<HTMLDivElement>('error-banner');
  const historyPane = el<HTMLDivElement>('history');
  const canvas = el<HTMLCanvasElement>('scene');
  const ctx = canvas.getContext('2d')!;

  const images = await api.listImages();
  for (const info of images) {
    const option = document.createElement('option');
    option.value = info.id;
    option.textContent = `${info.id} (${info.width}×${info.height})`;
    imageSelect.appendChild(option);
  }

  let background: HTMLImageElement | null = null;
  let overlay: string | null = null;

  function redraw(): void {
    const image = session.currentImage;
    if (!image || !background) return;
    const scale = session.displayScale;
    canvas.width = image.width * scale;
    canvas.height = image.height * scale;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(background, 0, 0, canvas.width, canvas.height);
    const box = session.draftBox;
    if (box) {
      const rect = boxToDisplayRect(box, scale);
      ctx.strokeStyle = session.draftWarnings.length ? '#e04040' : '#40c040';
      ctx.lineWidth = 2;
      ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
    }
    warningsBox.textContent = session.draftWarnings.join('; ');
  }

  async function loadSelected(): Promise<void> {
    const info = images.find((i) => i.id === imageSelect.value);
    if (!info) return;
    session.selectImage(info);
    overlay = null;
    background = new Image();
    background.src = api.imageUrl(info.id);
    await background.decode();
    redraw();
  }

  function renderHistory(): void {
    historyPane.replaceChildren();
    session.history.forEach((entry: HistoryEntry, index: number) => {
      const cell = document.createElement('figure');
      const img = document.createElement('img');
      img.src = pngUrl(entry.composedPng);
      img.width = 160;
      const caption = document.createElement('figcaption');
      const { x, y, w, h } = entry.box;
      caption.textContent = `#${index} box ${x},${y} ${w}×${h}`;
      cell.append(img, caption);
      historyPane.appendChild(cell);
    });
  }

  canvas.addEventListener('pointerdown', (event) => {
    if (!session.currentImage) return;
    canvas.setPointerCapture(event.pointerId);
    session.beginDrag({ x: event.offsetX, y: event.offsetY });
    redraw();
  });
  canvas.addEventListener('pointermove', (event) => {
    if (event.buttons !== 1) return;
    session.moveDrag({ x: event.offsetX, y: event.offsetY });
    redraw();
  });

  submitButton.addEventListener('click', async () => {
    errorBanner.textContent = '';
    submitButton.disabled = true;
    try {
      const entry = await session.submit({ stages: stagesToggle.checked });
      if (overlay) URL.revokeObjectURL(overlay);
      overlay = pngUrl(entry.composedPng);
      background = new Image();
      background.src = overlay;
      await background.decode();
      renderHistory();
      redraw();
    } catch (err) {
      errorBanner.textContent =
        err instanceof ServiceError ? `rejected: ${err.message}` : `request failed: ${err}`;
    } finally {
      submitButton.disabled = false;
    }
  });

  clearButton.addEventListener('click', () => {
    session.clearHistory();
    renderHistory();
  });

  scaleSelect.addEventListener('change', () => {
    session.displayScale = parseFloat(scaleSelect.value);
    redraw();
  });
  imageSelect.addEventListener('change', () => void loadSelected());

  if (images.length > 0) {
    imageSelect.value = images[0].id;
    await loadSelected();
  }
}

void main();
