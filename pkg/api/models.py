from pydantic import BaseModel, ConfigDict, Field
from typing import Optional, List

from src.schemas import ScenarioConfig


class EpisodeRequest(BaseModel):
    """Request model for the episode endpoint"""
    scenario: Optional[str] = Field("benchmark", description="Scenario name or path")
    inline_scenario: Optional[ScenarioConfig] = Field(None, description="Full scenario; overrides `scenario`")
    blue_policy: str = Field("passive", min_length=1)
    red_policy: str = Field("red-chain", min_length=1)
    seed: int = Field(0, ge=0)
    horizon: Optional[float] = Field(None, ge=0, description="Overrides the scenario horizon")
    preset: Optional[str] = None

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "scenario": "benchmark:30",
            "blue_policy": "blue-threshold-isolate",
            "red_policy": "red-chain",
            "seed": 3,
            "horizon": 100
        }
    })


class EncodeRequest(BaseModel):
    """Raw log text to embed"""
    text: str = Field(..., min_length=1, description="Windows-Event XML or any log line")


class EncodeResponse(BaseModel):
    """Embedding of one log"""
    dimension: int
    norm: float
    out_of_vocabulary: bool
    embedding: List[float]

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "dimension": 128,
            "norm": 1.0,
            "out_of_vocabulary": False,
            "embedding": [0.01, -0.12, 0.08]
        }
    })


class HealthResponse(BaseModel):
    """Health check response"""
    status: str
    version: str
    registry_size: int
    encoder_loaded: bool
