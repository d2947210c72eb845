"""Numerical laboratory for magnetic flows on a closed hyperbolic surface of genus 2."""

from .geometry import Bump, BumpField, FuchsianGroup, MobiusMap, SurfaceModel
from .flow import FlowParams, OrbitSegment, SMPoint, integrate

__version__ = "0.1.0"

__all__ = ["Bump", "BumpField", "FlowParams", "FuchsianGroup", "MobiusMap", "OrbitSegment", "SMPoint",
           "SurfaceModel", "integrate"]
