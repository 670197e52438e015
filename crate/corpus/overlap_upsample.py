import pandas as pd
from sklearn.utils import resample
from sklearn.model_selection import train_test_split
from sklearn.linear_model import LogisticRegression

data = pd.read_csv("churn.csv")
majority = data[data.churn == 0]
minority = data[data.churn == 1]
minority_up = resample(minority, replace=True, n_samples=len(majority), random_state=7)
balanced = pd.concat([majority, minority_up])
features = balanced.drop("churn", axis=1)
labels = balanced["churn"]
train_x, test_x, train_y, test_y = train_test_split(features, labels, test_size=0.25)
model = LogisticRegression(max_iter=500)
model.fit(train_x, train_y)
predictions = model.predict(test_x)
