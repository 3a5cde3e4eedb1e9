import logging


def lr_schedule_step(history, current_lr: float, cfg) -> float:
    """
    Decay the learning rate by cfg.decay_factor when each of the last cfg.plateau_epochs
    accuracies gained less than cfg.min_improvement points over the best value before them.
    """
    n = cfg.plateau_epochs
    if len(history) < n + 1:
        return current_lr
    best_prior = max(history[:-n])
    gains = [acc - best_prior for acc in history[-n:]]
    if all(gain < cfg.min_improvement for gain in gains):
        return current_lr * cfg.decay_factor
    return current_lr


class PlateauLR:
    """
    Tracks validation accuracy per epoch and applies lr_schedule_step. The history
    restarts after every decay.
    """
    def __init__(self, cfg, initial_lr: float):
        self.cfg = cfg
        self.lr = initial_lr
        self.history = []
        self.n_decays = 0

    def step(self, accuracy: float) -> float:
        self.history.append(float(accuracy))
        new_lr = lr_schedule_step(self.history, self.lr, self.cfg)
        if new_lr != self.lr:
            logging.info(f"PlateauLR: accuracy plateau over {self.cfg.plateau_epochs} epochs, "
                         f"lr {self.lr:.6g} -> {new_lr:.6g}")
            self.lr = new_lr
            self.history = []
            self.n_decays += 1
        return self.lr
