import type { ApiClient, Sample } from './api'
import { ApiError } from './api'

// Paged thumbnail browser plus the replace action. The default grid never
// exposes a label field: rows are reduced to {index, thumbnail} before they
// reach any renderer, so an audit-mode payload cannot leak labels here.

export interface GridCell {
  index: number
  thumbnail: string
}

export interface PickerPage {
  datasetId: string
  offset: number
  pageSize: number
  total: number
  cells: GridCell[]
}

export interface ReplaceOutcome {
  ok: boolean
  newSetId?: string
  error?: string
}

export function toGridCells(samples: Sample[]): GridCell[] {
  return samples.map((s) => ({ index: s.index, thumbnail: s.thumbnail }))
}

export async function loadPage(
  api: ApiClient,
  datasetId: string,
  page: number,
  pageSize = 24,
): Promise<PickerPage> {
  const offset = page * pageSize
  const body = await api.getSamples(datasetId, offset, pageSize)
  return { datasetId, offset, pageSize, total: body.total, cells: toGridCells(body.samples) }
}

export function pageCount(page: PickerPage): number {
  return Math.ceil(page.total / page.pageSize)
}

export async function replacePrototype(
  api: ApiClient,
  setId: string,
  classId: number,
  sampleIndex: number,
): Promise<ReplaceOutcome> {
  try {
    const res = await api.replacePrototype(setId, classId, sampleIndex)
    return { ok: true, newSetId: res.set_id }
  } catch (err) {
    if (err instanceof ApiError && err.status === 422) {
      return { ok: false, error: err.detail } // surfaced inline, not thrown
    }
    throw err
  }
}
