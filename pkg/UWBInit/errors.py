class InsufficientSamplesError(ValueError):
    def __init__(self, needed: int, got: int):
        super().__init__(f"insufficient samples: need at least {needed}, got {got}")
        self.needed = needed
        self.got = got


class DegenerateDirectionError(ValueError):
    def __init__(self, index: int):
        super().__init__(f"degenerate direction: sample {index} coincides with the reference point")
        self.index = index


class DegenerateGeometryError(ValueError):
    def __init__(self, rank: int, expected: int = 4):
        super().__init__(f"degenerate geometry: design matrix rank {rank} < {expected}")
        self.rank = rank


class OutOfOrderError(ValueError):
    def __init__(self, t_prev: float, t_new: float):
        super().__init__(f"out-of-order timestamp: {t_new!r} is not later than {t_prev!r}")
        self.t_prev = t_prev
        self.t_new = t_new


class InterpolationError(ValueError):
    pass


class NoBracketingPosesError(InterpolationError):
    def __init__(self, t: float, t_first: float, t_last: float):
        super().__init__(f"no bracketing poses for t={t!r} (pose span [{t_first!r}, {t_last!r}])")
        self.t = t


class PoseGapError(InterpolationError):
    def __init__(self, t: float, gap: float, max_gap: float):
        super().__init__(f"pose gap of {gap:.3f} s around t={t!r} exceeds max_gap={max_gap}")
        self.t = t
        self.gap = gap


class DivergedError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"diverged: non-finite values at LM iteration {iteration}")
        self.iteration = iteration


class ParseError(ValueError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


class ConfigError(ValueError):
    pass
