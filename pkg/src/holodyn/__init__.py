"""holodyn: local discrete holomorphic dynamics near fixed points.

Modules
-------
mvps        truncated formal germ algebra (compose / multiply / invert)
spectrum    multipliers, resonances, taxonomy, linear splittings
normalform  Poincare-Dulac, formal linearization, selective elimination,
            1-D parabolic normal forms and the index invariant
smalldiv    continued fractions, Brjuno-type sums, Diophantine diagnostics
parabolic   attracting directions, petals, Fatou coordinates, characteristic
            directions with directors
blowup      blow-up charts, germ lifts, lifted multipliers
dynlab      orbit engine and basin sampler
cli         the `holodyn` command-line front
"""

__version__ = "0.1.0"
