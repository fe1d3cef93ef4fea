from dataclasses import asdict, dataclass
from typing import Any

from sipp_search.errors import ConfigError

# probes_per_table at or above this value means "visit every bucket of every table"
EXHAUSTIVE_PROBES = 2**31 - 1


@dataclass(frozen=True)
class LshParams:
    num_tables: int
    hashes_per_table: int
    bucket_width: float
    probes_per_table: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.num_tables < 1:
            raise ConfigError(f"num_tables must be >= 1, got {self.num_tables}")
        if self.hashes_per_table < 1:
            raise ConfigError(
                f"hashes_per_table must be >= 1, got {self.hashes_per_table}"
            )
        if not self.bucket_width > 0:
            raise ConfigError(f"bucket_width must be > 0, got {self.bucket_width}")
        if not 1 <= self.probes_per_table <= EXHAUSTIVE_PROBES:
            raise ConfigError(
                f"probes_per_table must be within [1, {EXHAUSTIVE_PROBES}], got {self.probes_per_table}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def exhaustive(self) -> bool:
        return self.probes_per_table >= EXHAUSTIVE_PROBES

    @property
    def cost(self) -> tuple[int, int]:
        return self.num_tables * self.probes_per_table, self.hashes_per_table

    def with_exhaustive_probing(self) -> "LshParams":
        return LshParams(
            num_tables=self.num_tables,
            hashes_per_table=self.hashes_per_table,
            bucket_width=self.bucket_width,
            probes_per_table=EXHAUSTIVE_PROBES,
            seed=self.seed,
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LshParams":
        try:
            return cls(
                num_tables=int(data["num_tables"]),
                hashes_per_table=int(data["hashes_per_table"]),
                bucket_width=float(data["bucket_width"]),
                probes_per_table=int(data.get("probes_per_table", 1)),
                seed=int(data.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid lsh parameters {data}: {e}")
