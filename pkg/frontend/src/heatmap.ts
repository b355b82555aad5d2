import { formatWeight } from "./format.js";

export interface HeatCell {
  classId: number;
  part: string;
  weight: number;
  bucket: number; // 0..4, for the w0..w4 shading classes
  label: string;
}

export function weightBucket(weight: number): number {
  if (weight < 0 || weight > 1 || Number.isNaN(weight)) {
    throw new Error(`weight ${weight} outside [0, 1]`);
  }
  return Math.min(4, Math.floor(weight * 5));
}

// Rows sorted by numeric class id, one cell per part in service order.
export function heatmapGrid(
  rows: Record<string, number[]>,
  parts: string[],
): HeatCell[][] {
  return Object.keys(rows)
    .map(Number)
    .sort((a, b) => a - b)
    .map((classId) => {
      const row = rows[String(classId)];
      if (row === undefined || row.length !== parts.length) {
        throw new Error(`rule row for class ${classId} does not match the part list`);
      }
      return parts.map((part, index) => {
        const weight = row[index] as number;
        return {
          classId,
          part,
          weight,
          bucket: weightBucket(weight),
          label: formatWeight(weight),
        };
      });
    });
}
