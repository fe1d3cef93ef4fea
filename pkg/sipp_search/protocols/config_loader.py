from typing import Any, Protocol, runtime_checkable


@runtime_checkable
class ConfigLoader(Protocol):
    def fetch(self) -> str: ...

    def load(self) -> dict[str, Any]: ...
