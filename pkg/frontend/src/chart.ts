// Tiny canvas polyline chart for one vitals series; no dependencies.

import type { SampleJson } from "./api.js";

export function drawSeries(canvas: HTMLCanvasElement, samples: SampleJson[]): void {
  const ctx = canvas.getContext ? canvas.getContext("2d") : null;
  if (!ctx) return; // headless test environments have no 2d context
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  if (samples.length === 0) return;

  const values = samples.map((s) => s.value);
  const low = Math.min(...values);
  const high = Math.max(...values);
  const span = high - low || 1;
  const pad = 8;

  ctx.strokeStyle = "#10684f";
  ctx.lineWidth = 2;
  ctx.beginPath();
  samples.forEach((sample, index) => {
    const x =
      samples.length === 1
        ? width / 2
        : pad + (index * (width - 2 * pad)) / (samples.length - 1);
    const y = height - pad - ((sample.value - low) / span) * (height - 2 * pad);
    if (index === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();

  ctx.fillStyle = "#587062";
  ctx.font = "11px sans-serif";
  ctx.fillText(String(high), 2, 12);
  ctx.fillText(String(low), 2, height - 2);
}
