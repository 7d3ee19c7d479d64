from .blur_map import BlurMap, EstimateResult        # noqa: F401
from .edge_map import EdgeLabel, EdgeMap, PatchSet   # noqa: F401
from .image import Image, Kernel                     # noqa: F401
