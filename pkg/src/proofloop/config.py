"""Config file schema, profiles, overrides, and service construction.

Precedence: flag > profile > default. Secrets never live in the config file;
HTTP backends name the environment variable that holds their key. The default
profile wires mock backends everywhere so nothing costs money by accident.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

from .core import (
    HistoryN,
    NoMemory,
    PriceTable,
    ProofLoopError,
    ProverConfig,
    SelfManaged,
    ServiceBundle,
    SystemClock,
)
from .leanenv import DEFAULT_BUILD_COMMAND, LakeBuildBackend, MockLeanEnv, Workspace
from .llm import EchoLLM, HttpLLM, ScriptedLLM
from .toolbox import (
    HttpLibrarySearch,
    HttpWebSearch,
    MockLibrarySearch,
    MockWebSearch,
    Toolbox,
)


class ConfigError(ProofLoopError):
    pass


DEFAULTS: dict[str, Any] = {
    "model": "mock-model",
    "mode": "iterative",
    "max_iterations": 20,
    "memory": {"strategy": "self_managed", "n": 5},
    "tools": [],
    "thinking_budget": 10_000,
    "build_timeout": 300.0,
    "max_tool_calls": 4,
    "lean_version": "4.24",
    "denylist": ["sorry", "admit", "apply?", "exact?", "rw?", "simp?", "axiom", "#exit"],
    "notes_cap": 4_000,
    "render_budget": 40_000,
    "jobs": 1,
    "out_dir": "proofloop_out",
    "llm": {
        "backend": "echo",  # echo | scripted | http
        "script": None,
        "base_url": None,
        "api_key_env": "PROOFLOOP_API_KEY",
        "structured": True,
        "extra": {},
    },
    "reviewer_llm": {"backend": None, "script": None, "base_url": None,
                     "api_key_env": "PROOFLOOP_API_KEY", "structured": True, "extra": {}},
    "reflection_llm": {"backend": None, "script": None, "base_url": None,
                       "api_key_env": "PROOFLOOP_API_KEY", "structured": True, "extra": {}},
    "leanenv": {
        "backend": "mock",  # mock | lake
        "script": None,
        "workspace": None,
        "build_command": list(DEFAULT_BUILD_COMMAND),
        "concurrency": None,
    },
    "library_search": {"backend": "mock", "url": None, "table": None, "limit": 10},
    "web_search": {
        "backend": "mock",
        "url": "https://api.tavily.com",
        "api_key_env": "PROOFLOOP_TAVILY_KEY",
        "max_results": 5,
    },
    "price_table": {},
}


def _deep_merge(base: dict[str, Any], overlay: dict[str, Any], path: str = "") -> dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in overlay.items():
        where = f"{path}.{key}" if path else key
        if key not in base and path in ("price_table",):
            merged[key] = value  # price tables are open maps keyed by model
            continue
        if key not in base and path in ("llm.extra", "reviewer_llm.extra", "reflection_llm.extra"):
            merged[key] = value
            continue
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict) and key != "price_table":
            merged[key] = _deep_merge(base[key], value, where)
        else:
            merged[key] = value
    return merged


def _parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError(f"overrides take the form key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key.strip().split("."), value


def _apply_dotted(data: dict[str, Any], parts: list[str], value: Any) -> None:
    node = data
    for index, part in enumerate(parts):
        leaf = index == len(parts) - 1
        if part not in node:
            parent = ".".join(parts[: index + 1])
            if parts[0] == "price_table":
                node[part] = value if leaf else {}
            else:
                raise ConfigError(f"unknown config key: {parent}")
        if leaf:
            node[part] = value
        else:
            if not isinstance(node[part], dict):
                raise ConfigError(f"{'.'.join(parts[:index + 1])} is not a section")
            node = node[part]


class Settings:
    def __init__(self, data: dict[str, Any]):
        self.data = data

    def __getitem__(self, key: str) -> Any:
        return self.data[key]

    def prover_config(self) -> ProverConfig:
        memory_cfg = self.data["memory"]
        strategy = memory_cfg.get("strategy", "self_managed")
        if strategy == "none":
            memory = NoMemory()
        elif strategy == "history":
            memory = HistoryN(int(memory_cfg.get("n", 5)))
        elif strategy == "self_managed":
            memory = SelfManaged()
        else:
            raise ConfigError(f"unknown memory strategy {strategy!r}")
        if self.data["mode"] == "single_shot":
            memory = NoMemory()
        return ProverConfig(
            max_iterations=int(self.data["max_iterations"]),
            memory=memory,
            tools_enabled=frozenset(self.data["tools"]),
            thinking_budget=int(self.data["thinking_budget"]),
            model=str(self.data["model"]),
            build_timeout=float(self.data["build_timeout"]),
            max_tool_calls=int(self.data["max_tool_calls"]),
            mode=str(self.data["mode"]),
            lean_version=str(self.data["lean_version"]),
            denylist=tuple(self.data["denylist"]),
            notes_cap=int(self.data["notes_cap"]),
            render_budget=int(self.data["render_budget"]),
        )

    def price_table(self) -> PriceTable | None:
        table = self.data.get("price_table") or {}
        return PriceTable.from_dict(table) if table else None

    def _build_llm(self, section: dict[str, Any], fallback: Any = None) -> Any:
        backend = section.get("backend")
        if backend is None:
            return fallback
        if backend == "echo":
            return EchoLLM()
        if backend == "scripted":
            script = section.get("script")
            if not script:
                return EchoLLM()
            return ScriptedLLM.from_file(script)
        if backend == "http":
            base_url = section.get("base_url")
            if not base_url:
                raise ConfigError("http llm backend requires base_url")
            return HttpLLM(
                base_url=base_url,
                api_key_env=section.get("api_key_env", "PROOFLOOP_API_KEY"),
                structured=bool(section.get("structured", True)),
                extra=dict(section.get("extra") or {}),
            )
        raise ConfigError(f"unknown llm backend {backend!r}")

    def build_services(self) -> ServiceBundle:
        llm = self._build_llm(self.data["llm"])
        reviewer = self._build_llm(self.data["reviewer_llm"], fallback=None)
        reflection = self._build_llm(self.data["reflection_llm"], fallback=None)

        env_cfg = self.data["leanenv"]
        if env_cfg["backend"] == "mock":
            script = env_cfg.get("script")
            leanenv = MockLeanEnv.from_file(script) if script else MockLeanEnv()
        elif env_cfg["backend"] == "lake":
            workspace_root = env_cfg.get("workspace")
            if not workspace_root:
                raise ConfigError("lake leanenv backend requires a workspace path")
            workspace = Workspace(
                root=Path(workspace_root),
                build_command=tuple(env_cfg.get("build_command") or DEFAULT_BUILD_COMMAND),
            )
            leanenv = LakeBuildBackend(workspace, max_concurrent=env_cfg.get("concurrency"))
        else:
            raise ConfigError(f"unknown leanenv backend {env_cfg['backend']!r}")

        lib_cfg = self.data["library_search"]
        if lib_cfg["backend"] == "mock":
            table = lib_cfg.get("table")
            library = MockLibrarySearch.from_file(table) if table else MockLibrarySearch()
        elif lib_cfg["backend"] == "http":
            if not lib_cfg.get("url"):
                raise ConfigError("http library_search backend requires url")
            library = HttpLibrarySearch(lib_cfg["url"])
        else:
            raise ConfigError(f"unknown library_search backend {lib_cfg['backend']!r}")

        web_cfg = self.data["web_search"]
        if web_cfg["backend"] == "mock":
            web = MockWebSearch()
        elif web_cfg["backend"] == "http":
            web = HttpWebSearch(
                base_url=web_cfg.get("url") or "https://api.tavily.com",
                api_key_env=web_cfg.get("api_key_env", "PROOFLOOP_TAVILY_KEY"),
                max_results=int(web_cfg.get("max_results", 5)),
            )
        else:
            raise ConfigError(f"unknown web_search backend {web_cfg['backend']!r}")

        toolbox = Toolbox(
            library=library,
            web=web,
            enabled=frozenset(self.data["tools"]),
            limit=int(lib_cfg.get("limit", 10)),
            max_results=int(web_cfg.get("max_results", 5)),
        )
        return ServiceBundle(
            llm=llm,
            leanenv=leanenv,
            toolbox=toolbox,
            reviewer_llm=reviewer,
            reflection_llm=reflection,
            price_table=self.price_table(),
            clock=SystemClock(),
        )


def load_settings(
    config_path: str | Path | None = None,
    profile: str = "default",
    overrides: tuple[str, ...] = (),
    flags: dict[str, Any] | None = None,
) -> Settings:
    """Merge defaults <- profile <- -O overrides <- CLI flags."""
    data = copy.deepcopy(DEFAULTS)
    if config_path is not None:
        try:
            raw = json.loads(Path(config_path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config_path}") from exc
        except ValueError as exc:
            raise ConfigError(f"{config_path}: invalid JSON ({exc})") from exc
        profiles = raw.get("profiles", {})
        if profile not in profiles:
            if profile == "default":
                profiles.setdefault("default", {})
            else:
                raise ConfigError(f"{config_path}: no profile named {profile!r}")
        data = _deep_merge(data, profiles.get(profile, {}))
    elif profile != "default":
        raise ConfigError("a named profile requires --config")
    for item in overrides:
        parts, value = _parse_override(item)
        _apply_dotted(data, parts, value)
    for key, value in (flags or {}).items():
        if value is None:
            continue
        _apply_dotted(data, key.split("."), value)
    return Settings(data)
