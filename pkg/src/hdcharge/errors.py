"""Exception hierarchy shared by every hdcharge module."""


class HDChargeError(Exception):
    """Base class for all package errors."""


# network
class TopologyError(HDChargeError):
    pass


class CycleDetected(TopologyError):
    pass


class DisconnectedBus(TopologyError):
    def __init__(self, bus_id):
        super().__init__(f"bus {bus_id!r} is not reachable from the slack bus")
        self.bus_id = bus_id


class MultipleSlack(TopologyError):
    pass


class MissingBase(HDChargeError):
    pass


class UnknownFeeder(HDChargeError):
    pass


# powerflow
class NoConvergence(HDChargeError):
    def __init__(self, max_iters, timestamp=None):
        msg = f"sweep did not converge within {max_iters} iterations"
        if timestamp is not None:
            msg += f" at {timestamp}"
        super().__init__(msg)
        self.max_iters = max_iters
        self.timestamp = timestamp


class InvalidBus(HDChargeError):
    pass


class SeriesLengthMismatch(HDChargeError):
    pass


class EmptySeries(HDChargeError):
    pass


# sensitivity
class ZeroPerturbation(HDChargeError):
    pass


class UnknownBus(HDChargeError):
    pass


class ZeroSensitivity(HDChargeError):
    def __init__(self, bus_id):
        super().__init__(f"zero sensitivity at contributing bus {bus_id!r}")
        self.bus_id = bus_id


# profiles / station
class NoLoadBuses(HDChargeError):
    pass


class StepMismatch(HDChargeError):
    pass


class NegativePower(HDChargeError):
    pass


# sizing
class CapacityBelowPeak(HDChargeError):
    pass


class DegeneratePrices(HDChargeError):
    pass


class InfeasibleEta(HDChargeError):
    pass


class EmptyProfiles(HDChargeError):
    pass


# mitigation
class InvalidPf(HDChargeError):
    pass


class SeriesMismatch(HDChargeError):
    pass


# cli / config
class ConfigError(HDChargeError):
    pass


class ScenarioError(HDChargeError):
    """Component failure annotated with the scenario that triggered it."""

    def __init__(self, scenario_id: str, cause: Exception):
        super().__init__(f"[{scenario_id}] {type(cause).__name__}: {cause}")
        self.scenario_id = scenario_id
        self.cause = cause
