"""Dense numerical kernel for the tagger: LSTM, CRF, Adam, gradient checking."""
from .crf import CrfParams, crf_log_partition, crf_marginals, crf_nll, crf_viterbi, path_score
from .gradcheck import GradCheckReport, grad_check, relative_error
from .lstm import LstmCellParams, bilstm_backward, bilstm_forward, lstm_backward, lstm_forward
from .optim import adam_step
from .params import Param, glorot

__all__ = [
    "CrfParams", "crf_log_partition", "crf_marginals", "crf_nll", "crf_viterbi", "path_score",
    "GradCheckReport", "grad_check", "relative_error",
    "LstmCellParams", "bilstm_backward", "bilstm_forward", "lstm_backward", "lstm_forward",
    "adam_step", "Param", "glorot",
]
