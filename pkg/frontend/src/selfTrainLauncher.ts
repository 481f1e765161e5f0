import type { ApiClient, PseudoLabel, RunSummary } from './api'

// Self-training launcher: pick k, preview the top-k most confident pool
// samples per class, and post the launch. Disabled until the source run
// reaches the completed state.

export const K_PRESETS = [5, 10, 20, 40] as const

export interface ClassPreview {
  classId: number
  records: PseudoLabel[]
  shortfall: boolean // fewer than k candidates exist for this class
}

export interface LauncherState {
  runId: string
  k: number
  enabled: boolean
  disabledReason: string | null
  previews: ClassPreview[]
}

export function launcherAvailability(run: RunSummary): { enabled: boolean; reason: string | null } {
  if (run.state === 'completed') return { enabled: true, reason: null }
  return { enabled: false, reason: `run is ${run.state}, not completed` }
}

export async function buildLauncherState(
  api: ApiClient,
  runId: string,
  k: number,
  numClasses: number,
): Promise<LauncherState> {
  const run = await api.getRun(runId)
  const { enabled, reason } = launcherAvailability(run)
  if (!enabled) {
    return { runId, k, enabled, disabledReason: reason, previews: [] }
  }
  const previews: ClassPreview[] = []
  for (let c = 0; c < numClasses; c++) {
    const records = await api.getPseudoLabels(runId, k, c)
    previews.push({ classId: c, records, shortfall: records.length < k })
  }
  return { runId, k, enabled, disabledReason: null, previews }
}

export async function launch(
  api: ApiClient,
  state: LauncherState,
  overrides: Record<string, unknown> = {},
): Promise<string> {
  if (!state.enabled) {
    throw new Error(state.disabledReason ?? 'launcher disabled')
  }
  const res = await api.selfTrain(state.runId, state.k, overrides)
  return res.run_id
}
