"""Partition posting users into the certified-financial (AFA) group and the
remainder (UFA) based on platform certification plus finance keywords in the
verification description."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .ingest import IngestError, PostCollection, normalize_text

logger = logging.getLogger(__name__)

# Replaceable default list; real deployments should supply their own
# keywords file.
DEFAULT_FINANCIAL_KEYWORDS = (
    "证券",
    "基金",
    "投资顾问",
    "分析师",
    "理财",
    "财经",
    "financial",
    "securities",
    "investment advisor",
    "analyst",
)


class GroupLabel(str, Enum):
    AFA = "AFA"
    UFA = "UFA"


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    certified: bool
    verify_description: str = ""


@dataclass
class PartitionResult:
    afa: PostCollection
    ufa: PostCollection
    unknown_posts: int = 0

    def __iter__(self):
        # unpacks as (afa, ufa)
        yield self.afa
        yield self.ufa


def _norm(text: str) -> str:
    return normalize_text(text).casefold()


def classify_user(profile: UserProfile, keywords: list[str]) -> GroupLabel:
    """AFA iff the account is certified and its verification description
    contains at least one keyword (substring match after normalization and
    case folding); UFA otherwise."""
    if not keywords:
        raise ValueError("keywords must be non-empty")
    if profile.certified:
        desc = _norm(profile.verify_description)
        if any(_norm(k) in desc for k in keywords if k.strip()):
            return GroupLabel.AFA
    return GroupLabel.UFA


def partition_posts(
    posts: PostCollection,
    profiles: dict[str, UserProfile] | list[UserProfile],
    keywords: list[str],
    unknown_group: GroupLabel = GroupLabel.UFA,
) -> PartitionResult:
    """Split a post collection into (AFA posts, UFA posts).

    Posts by authors missing from ``profiles`` are routed to
    ``unknown_group`` (default UFA, the complement group) and counted.
    """
    if isinstance(profiles, list):
        profiles = {p.user_id: p for p in profiles}
    label_cache: dict[str, GroupLabel] = {}
    result = PartitionResult(afa=PostCollection(), ufa=PostCollection())
    for post in posts:
        profile = profiles.get(post.user_id)
        if profile is None:
            result.unknown_posts += 1
            group = unknown_group
        else:
            group = label_cache.get(post.user_id)
            if group is None:
                group = classify_user(profile, keywords)
                label_cache[post.user_id] = group
        (result.afa if group is GroupLabel.AFA else result.ufa).posts.append(post)
    if result.unknown_posts:
        logger.info(
            "%d posts by unknown users routed to %s",
            result.unknown_posts,
            unknown_group.value,
        )
    return result


def load_profiles(path: str | Path) -> dict[str, UserProfile]:
    """Load user profiles from JSONL with keys user_id, certified,
    verify_description."""
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"profiles file not found: {path}")
    profiles: dict[str, UserProfile] = {}
    for lineno, line in enumerate(path.open(encoding="utf-8"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            profile = UserProfile(
                user_id=str(obj["user_id"]),
                certified=bool(obj["certified"]),
                verify_description=str(obj.get("verify_description", "")),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise IngestError(f"{path}:{lineno}: bad profile record: {exc}")
        if profile.user_id in profiles:
            raise IngestError(f"{path}:{lineno}: duplicate user_id {profile.user_id!r}")
        profiles[profile.user_id] = profile
    return profiles


def load_keywords(path: str | Path) -> list[str]:
    """One keyword per line; blank lines and ``#`` comments ignored."""
    keywords = []
    for line in Path(path).open(encoding="utf-8"):
        line = line.split("#", 1)[0].strip()
        if line:
            keywords.append(line)
    return keywords
