from enum import Enum


class SecurityLevel(str, Enum):
    Low = "Low"
    Medium = "Medium"
    High = "High"
