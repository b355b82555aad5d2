// Two-decimal percent display, matching the service's text tables:
// fractions in [0, 1] render as "32.13"; undefined values as "n/a".

export function formatPercent(value: number | null): string {
  if (value === null) return "n/a";
  return (100 * value).toFixed(2);
}

// Signed delta in percentage points. Anything that rounds to zero is
// displayed as the unsigned "0.00" so identity edits read as exactly flat.
export function formatDelta(value: number | null): string {
  if (value === null) return "n/a";
  const text = (100 * value).toFixed(2);
  if (text === "0.00" || text === "-0.00") return "0.00";
  return value > 0 ? `+${text}` : text;
}

export function formatWeight(weight: number): string {
  return weight.toFixed(2);
}
