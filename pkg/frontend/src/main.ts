import { ApiClient } from './api'
import { buildLineage } from './lineage'
import { loadPanelState, type AccuracyPanelState } from './accuracyPanel'
import { loadPage, pageCount, replacePrototype, type PickerPage } from './prototypePicker'
import { buildLauncherState, launch, K_PRESETS } from './selfTrainLauncher'
import { startPolling, type Poller } from './poller'

// Thin DOM shell over the view-model modules. All logic worth testing lives
// in those modules; this file only renders their state.

const api = new ApiClient('')

const $ = (id: string) => document.getElementById(id)!

let runId = ''
let datasetId = ''
let setId = ''
let picker: PickerPage | null = null
let pickerPageNo = 0
let selectedClass = 0
let poller: Poller | null = null

function renderPanel(state: AccuracyPanelState) {
  const el = $('panel')
  if (state.empty) {
    el.innerHTML = '<p class="muted">no run selected or run not found</p>'
    return
  }
  const bars = state.bars
    .map(
      (b) => `
      <div class="bar-row${b.weak ? ' weak' : ''}">
        <span>class ${b.classId}${b.weak ? ' &#9888;' : ''}</span>
        <div class="bar"><div class="fill" style="width:${(b.accuracy * 100).toFixed(1)}%"></div></div>
        <span>${(b.accuracy * 100).toFixed(1)}%</span>
      </div>`,
    )
    .join('')
  const spark = state.sparkline.map((a) => (a * 100).toFixed(0)).join(' → ')
  const banner = state.banner
    ? `<div class="banner ${state.banner.verdict}">
         ${state.banner.verdict}: try ${state.banner.suggestions
           .map((s) => `${s.param} ${s.direction}`)
           .join(', ')}
       </div>`
    : ''
  el.innerHTML = `${banner}
    <p>step ${state.step} — overall ${(state.overall! * 100).toFixed(1)}%</p>
    ${bars}
    <p class="muted">history: ${spark}</p>`
}

function renderPicker() {
  const el = $('grid')
  if (!picker) {
    el.innerHTML = '<p class="muted">no dataset loaded</p>'
    return
  }
  el.innerHTML = picker.cells
    .map(
      (c) =>
        `<img src="data:image/png;base64,${c.thumbnail}" title="sample ${c.index}"
              data-index="${c.index}" class="thumb">`,
    )
    .join('')
  $('page-label').textContent = `page ${pickerPageNo + 1} / ${pageCount(picker)}`
  for (const img of el.querySelectorAll<HTMLImageElement>('.thumb')) {
    img.onclick = async () => {
      const outcome = await replacePrototype(api, setId, selectedClass, Number(img.dataset.index))
      $('picker-status').textContent = outcome.ok
        ? `new set ${outcome.newSetId}`
        : `rejected: ${outcome.error}`
      if (outcome.ok) {
        setId = outcome.newSetId!
        void refreshLineage()
      }
    }
  }
}

async function refreshLineage() {
  if (!setId) return
  const runs = runId ? [await api.getRun(runId)] : []
  const chain = await buildLineage(api, setId, runs)
  $('lineage').innerHTML = chain
    .map(
      (n) => `<li><code>${n.setId}</code> (${n.provenance}, sizes [${n.perClassCounts}])
        ${n.runs.map((r) => `run ${r.runId}: ${r.state}`).join(' ')}</li>`,
    )
    .join('')
}

function wire() {
  $('watch').onclick = () => {
    runId = ($('run-id') as HTMLInputElement).value.trim()
    poller?.stop()
    poller = startPolling(
      () => loadPanelState(api, runId),
      renderPanel,
      (err) => {
        $('panel').innerHTML = `<p class="error">${String(err)}</p>`
      },
    )
  }
  $('load-dataset').onclick = async () => {
    datasetId = ($('dataset-id') as HTMLInputElement).value.trim()
    setId = ($('set-id') as HTMLInputElement).value.trim()
    pickerPageNo = 0
    picker = await loadPage(api, datasetId, pickerPageNo)
    renderPicker()
    void refreshLineage()
  }
  $('prev').onclick = async () => {
    if (!picker || pickerPageNo === 0) return
    picker = await loadPage(api, datasetId, --pickerPageNo)
    renderPicker()
  }
  $('next').onclick = async () => {
    if (!picker || pickerPageNo + 1 >= pageCount(picker)) return
    picker = await loadPage(api, datasetId, ++pickerPageNo)
    renderPicker()
  }
  $('class-select').onchange = (ev) => {
    selectedClass = Number((ev.target as HTMLSelectElement).value)
  }
  const kSelect = $('k-select') as HTMLSelectElement
  kSelect.innerHTML = K_PRESETS.map((k) => `<option value="${k}">${k}</option>`).join('')
  $('self-train').onclick = async () => {
    const k = Number(kSelect.value)
    const numClasses = (await api.getClassAccuracies(runId)).latest?.per_class.length ?? 0
    const state = await buildLauncherState(api, runId, k, numClasses)
    if (!state.enabled) {
      $('launch-status').textContent = state.disabledReason!
      return
    }
    const shortfalls = state.previews.filter((p) => p.shortfall).map((p) => p.classId)
    if (shortfalls.length) {
      $('launch-status').textContent = `warning: classes ${shortfalls} have fewer than ${k} candidates`
    }
    const childId = await launch(api, state)
    $('launch-status').textContent = `launched ${childId}`
  }
}

document.addEventListener('DOMContentLoaded', wire)
