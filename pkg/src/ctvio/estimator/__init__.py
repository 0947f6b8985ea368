"""Sliding-window constrained least-squares estimator."""
from .init import (BiasScaleResult, SplineFit, initialize_bias_scale, initialize_gravity, initialize_spline,
                   segment_from_fit)
from .kkt import marginalize, solve_constrained_step
from .problem import Layout, WindowProblem, build_window_problem, evaluate
from .sliding import SlidingWindowEstimator
from .state import ImuSegment, KeyframeState, MarginalPrior, SolverConfig, WindowState
from .window import (OptimizationReport, add_keyframe, apply_increment, make_segment, marginalize_oldest,
                     optimize_window, predict_pose, slide_window)

__all__ = [
    "BiasScaleResult", "ImuSegment", "KeyframeState", "Layout", "MarginalPrior", "OptimizationReport",
    "SlidingWindowEstimator", "SolverConfig", "SplineFit", "WindowProblem", "WindowState", "add_keyframe",
    "apply_increment", "build_window_problem", "evaluate", "initialize_bias_scale", "initialize_gravity",
    "initialize_spline", "make_segment", "marginalize", "marginalize_oldest", "optimize_window",
    "predict_pose", "segment_from_fit", "slide_window", "solve_constrained_step",
]
