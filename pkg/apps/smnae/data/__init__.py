from .mnist import find_mnist_files, load_mnist_idx
from .pairs import PairRecord, family_of, load_pair_list, partition_subject_disjoint, write_pair_list
from .pgm import read_pgm, write_pgm
from .synthetic import PAIRS_FILE, gen_synthetic_kin
from .videos import load_video_dir, write_video_dir
