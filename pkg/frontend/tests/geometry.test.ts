import { describe, expect, it } from 'vitest';

import {
  boxToDisplayRect,
  displayToImage,
  draftToBox,
  sizeFilterWarnings,
} from '../src/geometry';
import { STUB_FILTER } from './stub';

describe('draftToBox', () => {
  it('normalizes a right-down drag', () => {
    const box = draftToBox({ anchor: { x: 10, y: 20 }, current: { x: 40, y: 50 } }, 1, 320, 180);
    expect(box).toEqual({ x: 10, y: 20, w: 30, h: 30 });
  });

  it('mirrored drags produce the same box', () => {
    const a = draftToBox({ anchor: { x: 10, y: 20 }, current: { x: 40, y: 50 } }, 1, 320, 180);
    const b = draftToBox({ anchor: { x: 40, y: 50 }, current: { x: 10, y: 20 } }, 1, 320, 180);
    expect(a).toEqual(b);
  });

  it('maps 2x display coordinates back to image pixels', () => {
    const box = draftToBox({ anchor: { x: 20, y: 40 }, current: { x: 80, y: 100 } }, 2, 320, 180);
    expect(box).toEqual({ x: 10, y: 20, w: 30, h: 30 });
  });

  it('clips to image bounds', () => {
    const box = draftToBox({ anchor: { x: -15, y: -5 }, current: { x: 400, y: 200 } }, 1, 320, 180);
    expect(box).toEqual({ x: 0, y: 0, w: 320, h: 180 });
  });

  it('returns null for a degenerate drag', () => {
    expect(draftToBox({ anchor: { x: 5, y: 5 }, current: { x: 5, y: 5 } }, 1, 320, 180)).toBeNull();
  });

  it('returns null for a drag entirely outside the image', () => {
    expect(
      draftToBox({ anchor: { x: 400, y: 10 }, current: { x: 450, y: 40 } }, 1, 320, 180),
    ).toBeNull();
  });
});

describe('coordinate mapping', () => {
  it.each([1, 1.5, 2])('round-trips integers at scale %s', (scale) => {
    for (let v = 0; v <= 320; v++) {
      expect(displayToImage(v * scale, scale)).toBe(v);
    }
  });

  it('boxToDisplayRect scales all fields', () => {
    expect(boxToDisplayRect({ x: 10, y: 20, w: 30, h: 40 }, 1.5)).toEqual({
      x: 15,
      y: 30,
      w: 45,
      h: 60,
    });
  });
});

describe('sizeFilterWarnings', () => {
  it('accepts an in-range box', () => {
    expect(sizeFilterWarnings({ x: 0, y: 0, w: 30, h: 30 }, STUB_FILTER)).toEqual([]);
  });

  it('flags boxes below the minimum on each axis', () => {
    const warnings = sizeFilterWarnings({ x: 0, y: 0, w: 5, h: 8 }, STUB_FILTER);
    expect(warnings).toHaveLength(2);
    expect(warnings[0]).toContain('width 5');
    expect(warnings[1]).toContain('height 8');
  });

  it('flags boxes above the maxima', () => {
    const warnings = sizeFilterWarnings({ x: 0, y: 0, w: 70, h: 55 }, STUB_FILTER);
    expect(warnings).toHaveLength(2);
    expect(warnings[0]).toContain('exceeds the maximum 64');
    expect(warnings[1]).toContain('exceeds the maximum 50');
  });

  it('boundary sizes pass', () => {
    expect(sizeFilterWarnings({ x: 0, y: 0, w: 10, h: 10 }, STUB_FILTER)).toEqual([]);
    expect(sizeFilterWarnings({ x: 0, y: 0, w: 64, h: 50 }, STUB_FILTER)).toEqual([]);
  });
});
