from sklearn.datasets import load_breast_cancer
from sklearn.model_selection import train_test_split
from sklearn.linear_model import LogisticRegression
from sklearn.ensemble import GradientBoostingClassifier

X, y = load_breast_cancer(return_X_y=True)
X_train, X_test, y_train, y_test = train_test_split(X, y, test_size=0.2)
lr = LogisticRegression(max_iter=1000).fit(X_train, y_train)
gb = GradientBoostingClassifier().fit(X_train, y_train)
print(lr.score(X_test, y_test))
print(gb.score(X_test, y_test))
