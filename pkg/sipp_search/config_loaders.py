import json
from abc import ABC
from pathlib import Path
from typing import Any, override

import yaml

from mcp.server.fastmcp.utilities.logging import get_logger

from sipp_search.errors import ConfigError
from sipp_search.protocols.config_loader import ConfigLoader

logger = get_logger(__name__)


class BaseConfigLoader(ConfigLoader, ABC):
    def __init__(self, source: str):
        self._source = source

    @override
    def load(self) -> dict[str, Any]:
        content = self.fetch()
        try:
            config = json.loads(content)
            logger.debug("Config parsed as JSON.")
        except json.JSONDecodeError:
            try:
                config = yaml.safe_load(content)
                logger.debug("Config parsed as YAML.")
            except yaml.YAMLError as ye:
                raise ConfigError(
                    f"YAML parsing failed for {self._source}: {ye}. Raw content: {content[:500]}..."
                )

        if config is None:
            return {}
        if not isinstance(config, dict):
            raise ConfigError(
                f"config {self._source} must hold a mapping, got {type(config).__name__}"
            )
        return config


class FileConfigLoader(BaseConfigLoader):
    def __init__(self, path: str | Path):
        path = str(path)
        if path.lower().startswith("file://"):
            path = path[7:]
        super().__init__(path)

    @override
    def fetch(self) -> str:
        logger.debug(f"Reading config from file: {self._source}")
        try:
            return Path(self._source).read_text()
        except OSError as e:
            raise ConfigError(f"Failed to read config from {self._source}, {e}.")


def load_config(path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    return FileConfigLoader(path).load()
