"""Deterministic discrete-event core: event queue, signals, generator processes, servers."""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, Iterable

Process = Generator[Any, Any, Any]


class ClockError(RuntimeError):
    pass


@dataclass(order=True)
class _Entry:
    time: float
    seq: int
    fn: Callable[[], None] = field(compare=False)


class EventQueue:
    """Pending callbacks ordered by (time, insertion sequence)."""

    def __init__(self) -> None:
        self._heap: list[_Entry] = []
        self._seq = itertools.count()
        self.now = 0.0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: float, fn: Callable[[], None]) -> None:
        if time < self.now:
            raise ClockError(f"cannot schedule at {time} before current clock {self.now}")
        heapq.heappush(self._heap, _Entry(time, next(self._seq), fn))

    def pop(self) -> _Entry:
        e = heapq.heappop(self._heap)
        if e.time < self.now:
            raise ClockError("event queue went backwards")
        self.now = e.time
        return e

    def peek_time(self) -> float | None:
        return self._heap[0].time if self._heap else None


class Signal:
    """One-shot event other processes can wait on."""

    def __init__(self, sim: "Simulator"):
        self.sim = sim
        self.triggered = False
        self.value: Any = None
        self._waiters: list[Callable[[Any], None]] = []

    def succeed(self, value: Any = None) -> "Signal":
        if self.triggered:
            raise RuntimeError("signal already triggered")
        self.triggered = True
        self.value = value
        waiters, self._waiters = self._waiters, []
        for w in waiters:
            self.sim.schedule(0.0, lambda w=w: w(value))
        return self

    def on(self, fn: Callable[[Any], None]) -> None:
        if self.triggered:
            self.sim.schedule(0.0, lambda: fn(self.value))
        else:
            self._waiters.append(fn)


class Simulator:
    """Single-threaded event loop. Processes are generators that yield:

    * a number: sleep for that many milliseconds;
    * a Signal: resume with its value once it fires;
    * a list of Signals: resume with their values once all have fired.
    """

    def __init__(self) -> None:
        self.queue = EventQueue()

    @property
    def now(self) -> float:
        return self.queue.now

    def schedule(self, delay: float, fn: Callable[[], None]) -> None:
        if delay < 0:
            raise ClockError("negative delay")
        self.queue.push(self.now + delay, fn)

    def at(self, time: float, fn: Callable[[], None]) -> None:
        self.queue.push(time, fn)

    def signal(self) -> Signal:
        return Signal(self)

    def timeout(self, delay: float, value: Any = None) -> Signal:
        s = self.signal()
        self.schedule(delay, lambda: s.succeed(value))
        return s

    def all_of(self, signals: Iterable[Signal]) -> Signal:
        signals = list(signals)
        done = self.signal()
        if not signals:
            done.succeed([])
            return done
        remaining = [len(signals)]

        def one(_: Any) -> None:
            remaining[0] -= 1
            if remaining[0] == 0:
                done.succeed([s.value for s in signals])

        for s in signals:
            s.on(one)
        return done

    def process(self, gen: Process, delay: float = 0.0) -> Signal:
        """Start a generator process; the returned signal fires with its return value."""
        finished = self.signal()

        def step(value: Any) -> None:
            try:
                item = gen.send(value)
            except StopIteration as stop:
                finished.succeed(stop.value)
                return
            if isinstance(item, Signal):
                item.on(step)
            elif isinstance(item, (list, tuple)):
                self.all_of(item).on(step)
            else:
                self.schedule(float(item), lambda: step(None))

        self.schedule(delay, lambda: step(None))
        return finished

    def run(self, until: float | None = None) -> float:
        while self.queue:
            t = self.queue.peek_time()
            if until is not None and t > until:
                self.queue.now = until
                break
            self.queue.pop().fn()
        return self.now


class Server:
    """FIFO station with `capacity` parallel servers and deterministic service times."""

    def __init__(self, sim: Simulator, capacity: int = 1):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.sim = sim
        self.capacity = capacity
        self.busy = 0
        self._waiting: deque[Signal] = deque()
        self.served = 0

    def acquire(self) -> Signal:
        s = self.sim.signal()
        if self.busy < self.capacity:
            self.busy += 1
            s.succeed(self.sim.now)
        else:
            self._waiting.append(s)
        return s

    def release(self) -> None:
        self.served += 1
        if self._waiting:
            self._waiting.popleft().succeed(self.sim.now)
        else:
            self.busy -= 1

    def serve(self, duration: float) -> Process:
        yield self.acquire()
        yield duration
        self.release()
