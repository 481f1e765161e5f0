import type { ApiClient, ClassAccuracies, Diagnosis } from './api'
import { ApiError } from './api'

// View-model for the per-class accuracy panel: bars for the latest eval,
// a sparkline over history, weak-class flags, and a failure-mode banner
// with tuning directions. Every number comes from API responses.

export interface ClassBar {
  classId: number
  accuracy: number
  weak: boolean
}

export interface Banner {
  verdict: string
  suggestions: { param: string; direction: string }[]
}

export interface AccuracyPanelState {
  empty: boolean
  step: number | null
  overall: number | null
  bars: ClassBar[]
  sparkline: number[]
  banner: Banner | null
}

export function buildPanelState(acc: ClassAccuracies | null, diag: Diagnosis | null): AccuracyPanelState {
  if (!acc || !acc.latest) {
    return { empty: true, step: null, overall: null, bars: [], sparkline: [], banner: null }
  }
  const weak = new Set(diag?.weak_classes ?? [])
  const bars = acc.latest.per_class.map((a, c) => ({
    classId: c,
    accuracy: a,
    weak: weak.has(c),
  }))
  const banner =
    diag && (diag.verdict === 'instability' || diag.verdict === 'local-minimum')
      ? {
          verdict: diag.verdict,
          suggestions: diag.suggestions.map(([param, direction]) => ({ param, direction })),
        }
      : null
  return {
    empty: false,
    step: acc.latest.step,
    overall: acc.latest.accuracy,
    bars,
    sparkline: acc.history.map((e) => e.accuracy),
    banner,
  }
}

export async function loadPanelState(api: ApiClient, runId: string): Promise<AccuracyPanelState> {
  try {
    const [acc, diag] = await Promise.all([api.getClassAccuracies(runId), api.getDiagnosis(runId)])
    return buildPanelState(acc, diag)
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      return buildPanelState(null, null) // run missing -> empty-state view
    }
    throw err
  }
}
