from pydantic import BaseModel, ConfigDict, Field


class FrameEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    labels: list[str]
    trial_seed: int
    checksum: str
    jitter: tuple[int, int, int]


class GroundTruthManifest(BaseModel):
    model_config = ConfigDict(extra="ignore")

    application: str
    version: str
    master_seed: int
    # footage name -> canonical labels of the missing components
    ground_truth: dict[str, list[str]]
    frames: dict[str, FrameEntry]


class DatasetEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    category: str = Field(alias="class")
    labels: list[str]


class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="ignore")

    application: str
    version: str
    seed: int
    image_size: int
    defect_kinds: list[str]
    # relative path -> class and labels
    images: dict[str, DatasetEntry]


class Blob(BaseModel):
    bounding_box: tuple[int, int, int, int]
    area: int
    centroid: tuple[float, float]
    direction: str
    label: str | None


class Step(BaseModel):
    name: str
    status: str
    detail: str


class Report(BaseModel):
    model_config = ConfigDict(extra="ignore")

    application: str
    version: str
    control_name: str
    variable_name: str
    verdict: str | None
    offset: tuple[int, int]
    defect_labels: list[str]
    blobs: list[Blob]
    unmapped: list[Blob]
    step_log: list[Step]
    config: dict
