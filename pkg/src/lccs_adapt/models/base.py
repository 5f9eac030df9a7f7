"""Base models for configuration and result data structures."""

from pydantic import BaseModel

from ..utils.seeding import digest_of


class BaseLCCSModel(BaseModel):
    """Base model for every serializable configuration or record."""

    model_config = {
        "validate_by_name": True,
        "use_enum_values": True,
        "validate_assignment": True,
        "extra": "forbid"
    }

    def digest(self) -> str:
        """Short content digest of the JSON form, stable across runs."""
        return digest_of(self.model_dump(mode="json"))
