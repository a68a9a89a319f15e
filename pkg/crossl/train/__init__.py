"""Two-stage training: self-supervised pre-training, then classifier training."""

from crossl.train.classifier import FinetuneMode, finetune, predict, train_supervised
from crossl.train.common import embed, embed_split, new_model
from crossl.train.pretrain import pretrain, ssl_loss
from crossl.train.trace import EarlyStopping, EpochRecord, TrainTrace
