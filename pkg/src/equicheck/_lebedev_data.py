"""Lebedev-Laikov quadrature parameters (octahedral generator form).

Published node-family parameters for the rules of odd algebraic precision
used by this package; nodes are expanded by octahedral symmetry at load
time. Weights are normalized to sum to 1 over the sphere.
"""

# precision -> [(generator_code, a, b, weight), ...]
GENERATOR_RULES = {
    3: [
        (0, 0.0, 0.0, 0.1666666666666667e+0),
    ],
    5: [
        (0, 0.0, 0.0, 0.6666666666666667e-1),
        (2, 0.0, 0.0, 0.7500000000000000e-1),
    ],
    7: [
        (0, 0.0, 0.0, 0.4761904761904762e-1),
        (1, 0.0, 0.0, 0.3809523809523810e-1),
        (2, 0.0, 0.0, 0.3214285714285714e-1),
    ],
    9: [
        (0, 0.0, 0.0, 0.9523809523809524e-2),
        (2, 0.0, 0.0, 0.3214285714285714e-1),
        (4, 0.4597008433809831e+0, 0.0, 0.2857142857142857e-1),
    ],
    11: [
        (0, 0.0, 0.0, 0.1269841269841270e-1),
        (1, 0.0, 0.0, 0.2257495590828924e-1),
        (2, 0.0, 0.0, 0.2109375000000000e-1),
        (3, 0.3015113445777636e+0, 0.0, 0.2017333553791887e-1),
    ],
    13: [
        (0, 0.0, 0.0, 0.5130671797338464e-3),
        (1, 0.0, 0.0, 0.1660406956574204e-1),
        (2, 0.0, 0.0, -0.2958603896103896e-1),
        (3, 0.4803844614152614e+0, 0.0, 0.2657620708215946e-1),
        (4, 0.3207726489807764e+0, 0.0, 0.1652217099371571e-1),
    ],
    15: [
        (0, 0.0, 0.0, 0.1154401154401154e-1),
        (2, 0.0, 0.0, 0.1194390908585628e-1),
        (3, 0.3696028464541502e+0, 0.0, 0.1111055571060340e-1),
        (3, 0.6943540066026664e+0, 0.0, 0.1187650129453714e-1),
        (4, 0.3742430390903412e+0, 0.0, 0.1181230374690448e-1),
    ],
    17: [
        (0, 0.0, 0.0, 0.3828270494937162e-2),
        (2, 0.0, 0.0, 0.9793737512487512e-2),
        (3, 0.1851156353447362e+0, 0.0, 0.8211737283191111e-2),
        (3, 0.6904210483822922e+0, 0.0, 0.9942814891178103e-2),
        (3, 0.3956894730559419e+0, 0.0, 0.9595471336070963e-2),
        (4, 0.4783690288121502e+0, 0.0, 0.9694996361663028e-2),
    ],
    19: [
        (0, 0.0, 0.0, 0.5996313688621381e-3),
        (1, 0.0, 0.0, 0.7372999718620756e-2),
        (2, 0.0, 0.0, 0.7210515360144488e-2),
        (3, 0.6764410400114264e+0, 0.0, 0.7116355493117555e-2),
        (3, 0.4174961227965453e+0, 0.0, 0.6753829486314477e-2),
        (3, 0.1574676672039082e+0, 0.0, 0.7574394159054034e-2),
        (5, 0.1403553811713183e+0, 0.4493328323269557e+0, 0.6991087353303262e-2),
    ],
    23: [
        (0, 0.0, 0.0, 0.1782340447244611e-2),
        (1, 0.0, 0.0, 0.5716905949977102e-2),
        (2, 0.0, 0.0, 0.5573383178848738e-2),
        (3, 0.6712973442695226e+0, 0.0, 0.5608704082587997e-2),
        (3, 0.2892465627575439e+0, 0.0, 0.5158237711805383e-2),
        (3, 0.4446933178717437e+0, 0.0, 0.5518771467273614e-2),
        (3, 0.1299335447650067e+0, 0.0, 0.4106777028169394e-2),
        (4, 0.3457702197611283e+0, 0.0, 0.5051846064614808e-2),
        (5, 0.1590417105383530e+0, 0.8360360154824589e+0, 0.5530248916233094e-2),
    ],
    29: [
        (0, 0.0, 0.0, 0.8545911725128148e-3),
        (2, 0.0, 0.0, 0.3599119285025571e-2),
        (3, 0.3515640345570105e+0, 0.0, 0.3449788424305883e-2),
        (3, 0.6566329410219612e+0, 0.0, 0.3604822601419882e-2),
        (3, 0.4729054132581005e+0, 0.0, 0.3576729661743367e-2),
        (3, 0.9618308522614784e-1, 0.0, 0.2352101413689164e-2),
        (3, 0.2219645236294178e+0, 0.0, 0.3108953122413675e-2),
        (3, 0.7011766416089545e+0, 0.0, 0.3650045807677255e-2),
        (4, 0.2644152887060663e+0, 0.0, 0.2982344963171804e-2),
        (4, 0.5718955891878961e+0, 0.0, 0.3600820932216460e-2),
        (5, 0.2510034751770465e+0, 0.8000727494073952e+0, 0.3571540554273387e-2),
        (5, 0.1233548532583327e+0, 0.4127724083168531e+0, 0.3392312205006170e-2),
    ],
}
