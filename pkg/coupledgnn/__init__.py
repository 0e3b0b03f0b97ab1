from . import common
from . import configs
from . import graph
from . import features
from . import cascades
from . import model
from . import metrics
from . import train
from . import baseline
from . import fileio
from . import plotting
