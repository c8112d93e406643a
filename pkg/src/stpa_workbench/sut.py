"""Systems under test: the adapter contract, the in-process ACC reference
controller with seeded faults, and script execution."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Protocol, Sequence

from .model import NO_ACTION, Project, VariableConcretization
from .testgen import MUST_NOT_REPRODUCE, ConcreteTestScript


class SutAdapter(Protocol):
    def reset(self) -> None: ...

    def apply(self, event: str, inputs: Mapping[str, float]) -> Optional[str]: ...

    def observe(self) -> dict[str, str]: ...


class AccController:
    """Reference ACC controller working on concrete readings.

    Distances are metres (-1 when the lane is empty), speeds km/h.
    """

    SAFE_DISTANCE = 50
    DESIRED_SPEED = 100
    ACCEL = "accelerateSignal"
    DECEL = "decelerateSignal"

    def __init__(self, concretizations: Sequence[VariableConcretization] = ()):
        self._abstract = {c.variable: c for c in concretizations}
        self.reset()

    # -- contract -----------------------------------------------------------

    def reset(self) -> None:
        self.mode = "off"
        self.distance: float = -1
        self.speed: float = self.DESIRED_SPEED
        self.brake = 0

    def observe(self) -> dict[str, str]:
        readings = {"distance": self.distance, "speed": self.speed, "brake": self.brake}
        out = {}
        for name, value in readings.items():
            c = self._abstract.get(name)
            out[name] = (c.abstract(value) if c else None) or self._label(name, value)
        out["mode"] = self.mode
        return out

    def apply(self, event: str, inputs: Mapping[str, float]) -> Optional[str]:
        handler = getattr(self, f"_{self.mode}", None)
        return handler(event, dict(inputs)) if handler else None

    # -- helpers ------------------------------------------------------------

    def _label(self, name: str, value: float) -> str:
        if name == "distance":
            if value < 0:
                return "noTarget"
            return "lessOrEqualSafe" if value <= self.SAFE_DISTANCE else "greaterThanSafe"
        if name == "speed":
            if value < self.DESIRED_SPEED:
                return "lessThanDesired"
            return "equalsDesired" if value == self.DESIRED_SPEED else "greaterThanDesired"
        return "applied" if value else "notApplied"

    def too_close(self) -> bool:
        return 0 <= self.distance <= self.SAFE_DISTANCE

    def hold_speed(self) -> Optional[str]:
        if self.speed < self.DESIRED_SPEED:
            return self.ACCEL
        if self.speed > self.DESIRED_SPEED:
            return self.DECEL
        return None

    def _take(self, inputs: dict, name: str) -> None:
        if name in inputs:
            setattr(self, name, inputs[name])

    # -- modes --------------------------------------------------------------

    def _off(self, event, inputs):
        if event == "powerOn":
            self.mode = "standby"
        return None

    def _standby(self, event, inputs):
        if event == "powerOff":
            self.mode = "off"
        elif event == "brakePress":
            self.brake = inputs.get("brake", 1)
        elif event == "brakeRelease":
            self.brake = inputs.get("brake", 0)
        elif event == "setSpeed" and not self.brake:
            if self.too_close():
                self.mode = "follow"
                return self.DECEL
            self.mode = "cruise"
            return self.hold_speed()
        return None

    def _cruise(self, event, inputs):
        if event == "controlSpeed":
            return self.cruise_control()
        if event == "speedBelow":
            if self.speed > self.DESIRED_SPEED:
                return None
            self._take(inputs, "speed")
            return self.ACCEL
        if event in ("speedAt", "speedAbove"):
            self._take(inputs, "speed")
            return self.hold_speed()
        if event == "targetClose":
            self._take(inputs, "distance")
            self.mode = "follow"
            return self.DECEL
        if event in ("targetFar", "targetLost"):
            self._take(inputs, "distance")
            return self.hold_speed()
        if event == "brakePress":
            return self.cruise_brake(inputs)
        if event == "powerOff":
            self.mode = "off"
        return None

    def cruise_control(self) -> Optional[str]:
        if self.speed < self.DESIRED_SPEED and not self.too_close() and not self.brake:
            return self.ACCEL
        if self.speed > self.DESIRED_SPEED:
            return self.DECEL
        return None

    def cruise_brake(self, inputs) -> Optional[str]:
        self.brake = inputs.get("brake", 1)
        self.mode = "standby"
        return None

    def _follow(self, event, inputs):
        if event == "controlSpeed":
            return self.follow_control()
        if event in ("speedBelow", "speedAt", "speedAbove"):
            self._take(inputs, "speed")
            return self.DECEL
        if event in ("targetFar", "targetLost"):
            self._take(inputs, "distance")
            return None
        if event == "targetClose":
            if self.too_close():
                return None
            self._take(inputs, "distance")
            return self.DECEL
        if event == "brakePress":
            self.brake = inputs.get("brake", 1)
            self.mode = "standby"
        elif event == "powerOff":
            self.mode = "off"
        return None

    def follow_control(self) -> Optional[str]:
        if self.too_close():
            return self.DECEL
        self.mode = "cruise"
        return self.hold_speed()


class OverspeedMutant(AccController):
    """Accelerates on a clear road without checking the desired speed."""

    def cruise_control(self):
        if not self.too_close() and not self.brake:
            return self.ACCEL
        return super().cruise_control()


class MissingBrakeCheckMutant(AccController):
    """Keeps cruising when the driver presses the brake pedal."""

    def cruise_brake(self, inputs):
        self.brake = inputs.get("brake", 1)
        return None


class StuckFollowMutant(AccController):
    """Never leaves follow mode once it has been entered."""

    def follow_control(self):
        return self.DECEL


SUTS: dict[str, Callable[[Project], SutAdapter]] = {
    "acc-ref": lambda p: AccController(p.concretizations),
    "acc-mutant-overspeed": lambda p: OverspeedMutant(p.concretizations),
    "acc-mutant-missing-brake-check": lambda p: MissingBrakeCheckMutant(p.concretizations),
    "acc-mutant-stuck-follow": lambda p: StuckFollowMutant(p.concretizations),
}
MUTANTS = tuple(n for n in SUTS if n != "acc-ref")


# --------------------------------------------------------------------------
# Execution
# --------------------------------------------------------------------------

PASS = "pass"
FAIL = "fail"
ERROR = "error"


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    test_id: str
    variant: str
    polarity: str
    outcome: str
    step: Optional[int] = None
    expected: str = ""
    observed: str = ""
    ssrs: tuple[str, ...] = ()


@dataclass
class ExecutionReport:
    sut: str
    results: list[TestResult] = field(default_factory=list)

    @property
    def totals(self) -> dict[str, int]:
        out = {PASS: 0, FAIL: 0, ERROR: 0}
        for r in self.results:
            out[r.outcome] += 1
        return out

    @property
    def all_pass(self) -> bool:
        return all(r.outcome == PASS for r in self.results)

    def to_json(self) -> str:
        data = {"sut": self.sut, "totals": self.totals,
                "results": [asdict(r) for r in self.results]}
        return json.dumps(data, indent=1) + "\n"


def _divergence(script: ConcreteTestScript, sut: SutAdapter):
    """First step where the SUT differs from the script, or None."""
    sut.reset()
    for i, s in enumerate(script.steps):
        emitted = sut.apply(s.event, dict(s.inputs)) or NO_ACTION
        if emitted != s.expected_emission:
            return i, f"emits {s.expected_emission}", f"emits {emitted}"
        if s.expected_valuation:
            seen = sut.observe()
            want = dict(s.expected_valuation)
            diff = {k: v for k, v in want.items() if seen.get(k) != v}
            if diff:
                return (i, ", ".join(f"{k}={v}" for k, v in diff.items()),
                        ", ".join(f"{k}={seen.get(k)}" for k in diff))
    return None


def execute(scripts: Sequence[ConcreteTestScript], sut: SutAdapter, name: str = "") -> ExecutionReport:
    report = ExecutionReport(name)
    for script in scripts:
        try:
            div = _divergence(script, sut)
        except Exception as exc:  # adapter faults are verdicts, not crashes
            report.results.append(TestResult(script.test_id, script.variant, script.polarity, ERROR,
                                             observed=f"{type(exc).__name__}: {exc}",
                                             ssrs=script.ssrs))
            continue
        if script.polarity == MUST_NOT_REPRODUCE:
            if div is None:
                report.results.append(TestResult(script.test_id, script.variant, script.polarity,
                                                 FAIL, len(script.steps) - 1,
                                                 "divergence from the violating trace",
                                                 "trace reproduced", script.ssrs))
            else:
                report.results.append(TestResult(script.test_id, script.variant, script.polarity,
                                                 PASS, div[0], ssrs=script.ssrs))
        elif div is None:
            report.results.append(TestResult(script.test_id, script.variant, script.polarity, PASS,
                                             ssrs=script.ssrs))
        else:
            report.results.append(TestResult(script.test_id, script.variant, script.polarity, FAIL,
                                             *div, ssrs=script.ssrs))
    return report


__all__ = ["SutAdapter", "AccController", "OverspeedMutant", "MissingBrakeCheckMutant",
           "StuckFollowMutant", "SUTS", "MUTANTS", "TestResult", "ExecutionReport", "execute",
           "PASS", "FAIL", "ERROR"]
