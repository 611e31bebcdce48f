"""L2-relaxation estimation, prediction and panel-data inference."""
