from imblearn.over_sampling import SMOTE
from sklearn.datasets import make_classification
from sklearn.model_selection import train_test_split
from sklearn.ensemble import RandomForestClassifier

X, y = make_classification(n_samples=2000, weights=[0.9, 0.1], random_state=4)
X_train, X_test, y_train, y_test = train_test_split(X, y, stratify=y, random_state=4)
X_train_bal, y_train_bal = SMOTE().fit_resample(X_train, y_train)
forest = RandomForestClassifier(n_estimators=200)
forest.fit(X_train_bal, y_train_bal)
print(forest.score(X_test, y_test))
