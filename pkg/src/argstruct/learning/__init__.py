from .baseline import BaselineConfig, baseline_train, pegasos_multiclass
from .cost import CostConfig, cost_augment, cost_vectors, fn_link_cost, hamming
from .cv import CVResult, CVRow, FitResult, cross_validate, fit_baseline, fit_structured, kfold, select_C
from .model import (Example, Model, ModelFormatError, TemplateMismatchError, joint_feature_map,
                    load_model, psi, save_model)
from .predict import (MODES, Prediction, Violations, check_constraints, check_corpus, predict,
                      predict_corpus, round_assignment)
from .ssvm import (C_GRID, EpochRecord, HingeResult, TrainConfig, TrainingDiverged, TrainResult,
                   TrainTrace, bcfw_train, hinge_for_doc, structured_hinge)
