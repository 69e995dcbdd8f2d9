"""Initialization and Execution phases: planning, supervised runs, journal, log tree."""
from .config import BenchmarkSpec, CampaignConfig
from .journal import Journal, JournalRecord, Status
from .logtree import RawArtifacts, collect_logs
from .planner import FrequencyPlan, RunDescriptor, plan_campaign, reliable_cores_setup
from .runner import STAGES, CampaignRunner, RunRecord, resume_campaign

__all__ = [
    "BenchmarkSpec", "CampaignConfig", "Journal", "JournalRecord", "Status", "RawArtifacts",
    "collect_logs", "FrequencyPlan", "RunDescriptor", "plan_campaign", "reliable_cores_setup",
    "STAGES", "CampaignRunner", "RunRecord", "resume_campaign",
]
