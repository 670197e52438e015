from sklearn.datasets import load_iris
from sklearn.model_selection import train_test_split
from sklearn.metrics import accuracy_score, classification_report
from sklearn.neighbors import KNeighborsClassifier
from sklearn.tree import DecisionTreeClassifier
from sklearn.svm import SVC

X, y = load_iris(return_X_y=True)
X_train, X_test, y_train, y_test = train_test_split(X, y, random_state=0)
knn = KNeighborsClassifier(n_neighbors=3).fit(X_train, y_train)
tree = DecisionTreeClassifier().fit(X_train, y_train)
svm = SVC().fit(X_train, y_train)
print("knn", knn.score(X_test, y_test))
print("tree", tree.score(X_test, y_test))
print("svm", svm.score(X_test, y_test))
best = tree
preds = best.predict(X_test)
print(classification_report(y_test, preds))
print(accuracy_score(y_test, svm.predict(X_test)))
