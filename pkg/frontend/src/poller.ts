// Fixed-interval polling helper: the API is snapshot-consistent, so a plain
// 2 s poll keeps the panel live without a push channel. Overlapping ticks
// are skipped while a fetch is in flight.

export interface Poller {
  stop(): void
}

export function startPolling<T>(
  load: () => Promise<T>,
  onUpdate: (value: T) => void,
  onError: (err: unknown) => void = () => {},
  intervalMs = 2000,
): Poller {
  let busy = false
  let stopped = false
  const tick = async () => {
    if (busy || stopped) return
    busy = true
    try {
      const value = await load()
      if (!stopped) onUpdate(value)
    } catch (err) {
      if (!stopped) onError(err)
    } finally {
      busy = false
    }
  }
  void tick()
  const handle = setInterval(tick, intervalMs)
  return {
    stop() {
      stopped = true
      clearInterval(handle)
    },
  }
}
