from .bundle import Bundle
from .config import HoldoutPlan, StudyConfig, build_config, config_from_text, load_config, load_plan, plan_from_text
from .study import OnlineResult, ValidationReport, offline_run, online_run, report_timings, validate

__all__ = [
    "Bundle", "HoldoutPlan", "OnlineResult", "StudyConfig", "ValidationReport", "build_config", "config_from_text",
    "load_config", "load_plan", "offline_run", "online_run", "plan_from_text", "report_timings", "validate",
]
