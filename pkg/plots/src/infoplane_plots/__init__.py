from .render import PlotJob, Trajectory, drawn_data_checksum, load_csv, render

__all__ = ["PlotJob", "Trajectory", "drawn_data_checksum", "load_csv", "render"]
