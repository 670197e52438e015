import numpy as np
from sklearn.preprocessing import StandardScaler
from sklearn.model_selection import train_test_split
from sklearn.svm import SVC

X = np.loadtxt("features.csv", delimiter=",")
y = np.loadtxt("labels.csv")
scaler = StandardScaler()
scaler.fit(X)
X_scaled = scaler.transform(X)
X_tr, X_te, y_tr, y_te = train_test_split(X_scaled, y, random_state=1)
svc = SVC().fit(X_tr, y_tr)
accuracy = svc.score(X_te, y_te)
