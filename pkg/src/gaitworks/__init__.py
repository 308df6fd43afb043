"""gaitworks: gait-pathology classification from energy images.

Pipeline: chroma-key silhouettes -> gait/skeleton energy images -> compact
5-class CNN -> saliency / grad-CAM explanations, exposed via a CLI and an
HTTP service.
"""

__version__ = "0.1.0"

CLASS_NAMES = ["diplegic", "hemiplegic", "neuropathic", "normal", "parkinsonian"]
