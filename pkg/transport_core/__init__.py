"""
Core numerics of BundleLab: boxes, grids and thin sets, connection forms and
parallel transport, parameter-dependent fundamental solutions, and the
extension of parallel sections across obstacles.
"""
