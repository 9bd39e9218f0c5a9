"""Inverse pipeline: spectra -> fits -> populations -> statistics."""
from .calibration import CalibrationResult, calibrate_power_sweep
from .fitting import (FitBatch, FitResult, aligned_average, fit_frames, fit_lorentzian,
                      fit_lorentzians, sliding_average, track_centers)
from .fluctuations import (AllanTable, DeviationCurves, HistogramStats, OUFit, SigmaLaw,
                           SpectrumResult, allan_deviation, allan_table, deviation_curves,
                           fit_ou_whittle, fluctuation_spectrum, histogram_stats, periodogram,
                           sigma_vs_n, wiener_khinchin_psd)
from .pipeline import (FluctuationStats, TimeSeries, TimeSeriesRecord, analyze_frames,
                       analyze_windows, asymmetry_from_frames, fluctuation_stats)
from .thermometry import AsymmetryResult, asymmetry_thermometry, correct_backaction, raw_population

__all__ = [
    "AllanTable", "AsymmetryResult", "CalibrationResult", "DeviationCurves", "FitBatch",
    "FitResult", "FluctuationStats", "HistogramStats", "OUFit", "SigmaLaw", "SpectrumResult",
    "TimeSeries", "TimeSeriesRecord", "aligned_average", "allan_deviation", "allan_table",
    "analyze_frames", "analyze_windows", "asymmetry_from_frames", "asymmetry_thermometry",
    "calibrate_power_sweep", "correct_backaction", "deviation_curves", "fit_frames",
    "fit_lorentzian", "fit_lorentzians", "fit_ou_whittle", "fluctuation_spectrum",
    "fluctuation_stats", "histogram_stats", "periodogram", "raw_population", "sigma_vs_n",
    "sliding_average", "track_centers", "wiener_khinchin_psd",
]
