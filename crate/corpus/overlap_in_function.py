from imblearn.over_sampling import SMOTE
from sklearn.model_selection import train_test_split


def prepare(X, y):
    smote = SMOTE(k_neighbors=3)
    X_res, y_res = smote.fit_resample(X, y)
    return train_test_split(X_res, y_res, test_size=0.3)


parts = prepare(features, target)
