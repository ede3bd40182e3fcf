"""
 Copyright Duel 2025
"""
import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)


class Instance(BaseModel):
    """
    A single instance (an image, or a feature vector) with an optional binary label.
    """
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    features: np.ndarray
    label: Optional[int] = None

    @field_validator("features", mode="before")
    @classmethod
    def validate_features(cls, value):
        array = np.asarray(value)
        if array.ndim not in (1, 2) or array.size == 0:
            raise ValueError(f"instance must be a non-empty vector or 2-D grid, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("instance contains non-finite values")
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float32)
        return array

    @field_validator("label")
    @classmethod
    def validate_label(cls, value):
        if value is not None and value not in (0, 1):
            raise ValueError(f"instance label must be 0 or 1, got {value}")
        return value

    @property
    def shape(self) -> tuple:
        return tuple(self.features.shape)


class Bag(BaseModel):
    """
    An ordered set of instances with a bag label.

    When every instance is labelled the bag label must be the OR of the instance labels.
    """
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    id: str
    instances: List[Instance] = Field(min_length=1)
    bag_label: int

    @field_validator("bag_label")
    @classmethod
    def validate_bag_label(cls, value):
        if value not in (0, 1):
            raise ValueError(f"bag label must be 0 or 1, got {value}")
        return value

    @model_validator(mode="after")
    def validate_or_consistency(self):
        shapes = {instance.shape for instance in self.instances}
        if len(shapes) != 1:
            raise ValueError(f"bag {self.id} mixes instance shapes {sorted(shapes)}")
        if self.has_instance_labels and int(any(i.label for i in self.instances)) != self.bag_label:
            raise ValueError(f"bag {self.id}: bag label {self.bag_label} is not the OR of its instance labels")
        return self

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def has_instance_labels(self) -> bool:
        return all(instance.label is not None for instance in self.instances)

    @property
    def instance_shape(self) -> tuple:
        return self.instances[0].shape

    def stacked(self) -> np.ndarray:
        """
        :return: Array of shape (r, *instance_shape).
        """
        return np.stack([instance.features for instance in self.instances])

    def instance_labels(self) -> Optional[np.ndarray]:
        if not self.has_instance_labels:
            return None
        return np.array([instance.label for instance in self.instances], dtype=np.int64)

    def subset(self, indices, bag_id: Optional[str] = None, keep_label: bool = False) -> "Bag":
        """
        Sub-bag made of the given instance indices, in the order given.
        :param indices: Instance indices (non-empty).
        :param bag_id: Id of the new bag; defaults to "<id>[i,j,...]".
        :param keep_label: Copy the parent bag label instead of recomputing it from instance labels.
            Instance labels are dropped in that case so the OR constraint still holds.
        :return: The new bag.
        """
        chosen = [self.instances[i] for i in indices]
        if keep_label or not self.has_instance_labels:
            chosen = [Instance(features=i.features) for i in chosen]
            label = self.bag_label
        else:
            label = int(any(i.label for i in chosen))
        return Bag(id=bag_id or f"{self.id}[{','.join(str(i) for i in indices)}]", instances=chosen, bag_label=label)

    @classmethod
    def from_arrays(cls, bag_id: str, features: np.ndarray, instance_labels=None, bag_label: Optional[int] = None) -> "Bag":
        """
        Build a bag from stacked features and optional instance labels.
        """
        if instance_labels is None:
            instances = [Instance(features=x) for x in features]
            if bag_label is None:
                raise ValueError("bag label is required when instance labels are absent")
        else:
            instances = [Instance(features=x, label=int(y)) for x, y in zip(features, instance_labels)]
            if bag_label is None:
                bag_label = int(np.any(instance_labels))
        return cls(id=bag_id, instances=instances, bag_label=bag_label)
